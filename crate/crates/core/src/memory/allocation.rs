//! Allocation policies turning a scored pool into a buffer of at most `B`
//! samples. All policies return pool indices and break score ties by the
//! smaller sample id.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScoredPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocator {
    Global,
    RoundRobin,
    MinGuar,
}

impl Allocator {
    pub fn name(&self) -> &'static str {
        match self {
            Allocator::Global => "global",
            Allocator::RoundRobin => "round-robin",
            Allocator::MinGuar => "min-guar",
        }
    }
}

impl std::str::FromStr for Allocator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "global" | "greedy" => Ok(Allocator::Global),
            "round-robin" | "roundrobin" | "rr" => Ok(Allocator::RoundRobin),
            "min-guar" | "minguar" => Ok(Allocator::MinGuar),
            other => Err(format!("unknown allocator '{other}'")),
        }
    }
}

pub fn allocate(allocator: Allocator, scored: &ScoredPool, budget: usize) -> Vec<usize> {
    match allocator {
        Allocator::Global => allocate_global(scored, budget),
        Allocator::RoundRobin => allocate_round_robin(scored, budget),
        Allocator::MinGuar => allocate_min_guar(scored, budget),
    }
}

fn by_rank(scored: &ScoredPool) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scored.scores[b]
            .total_cmp(&scored.scores[a])
            .then(scored.pool[a].id.cmp(&scored.pool[b].id))
    }
}

/// Indices sorted best-first: descending score, then ascending id.
pub fn rank_order(scored: &ScoredPool, mut indices: Vec<usize>) -> Vec<usize> {
    indices.sort_by(by_rank(scored));
    indices
}

fn by_class(scored: &ScoredPool) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in scored.pool.iter().enumerate() {
        classes.entry(s.label).or_default().push(i);
    }
    for members in classes.values_mut() {
        members.sort_by(by_rank(scored));
    }
    classes
}

/// Top-`B` over the whole pool.
pub fn allocate_global(scored: &ScoredPool, budget: usize) -> Vec<usize> {
    let mut ranked = rank_order(scored, (0..scored.len()).collect());
    ranked.truncate(budget);
    ranked
}

/// Cycles classes in ascending label order, taking each class's next best
/// sample per visit.
pub fn allocate_round_robin(scored: &ScoredPool, budget: usize) -> Vec<usize> {
    let classes: Vec<Vec<usize>> = by_class(scored).into_values().collect();
    let target = budget.min(scored.len());
    let mut out = Vec::with_capacity(target);
    let mut depth = 0;
    while out.len() < target {
        for members in &classes {
            if out.len() == target {
                break;
            }
            if let Some(&i) = members.get(depth) {
                out.push(i);
            }
        }
        depth += 1;
    }
    out
}

/// Minimum-guarantee allocation.
///
/// With enough budget for every class present, each class keeps its best
/// sample and the surplus goes to the best remaining samples pool-wide.
/// Otherwise only the top-`B` class representatives are kept.
pub fn allocate_min_guar(scored: &ScoredPool, budget: usize) -> Vec<usize> {
    if scored.len() <= budget {
        return (0..scored.len()).collect();
    }
    let classes = by_class(scored);
    let reps: Vec<usize> = classes.values().map(|members| members[0]).collect();
    if budget < reps.len() {
        let mut top = rank_order(scored, reps);
        top.truncate(budget);
        return top;
    }
    let mut is_rep = vec![false; scored.len()];
    for &i in &reps {
        is_rep[i] = true;
    }
    let residual: Vec<usize> = (0..scored.len()).filter(|&i| !is_rep[i]).collect();
    let mut residual = rank_order(scored, residual);
    residual.truncate(budget - reps.len());
    let mut out = reps;
    out.extend(residual);
    out
}
