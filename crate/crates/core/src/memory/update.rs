//! One buffer update: form the candidate pool, select, dispose of the rest.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{allocate, herd_class, reservoir_update, Allocator, ReplayBuffer, ScoredPool, Scorer};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::par::Exec;
use crate::sample::Sample;

/// How a method refreshes its replay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum SelectionPolicy {
    /// Uniform random retention; optionally records logits of new entries.
    Reservoir { store_logits: bool },
    /// Per-class herding with a balanced class quota.
    Herding,
    /// Utility scoring followed by an allocation policy.
    Scored { scorer: Scorer, allocator: Allocator },
}

#[derive(Debug, Clone)]
pub struct BufferUpdate {
    pub buffer: ReplayBuffer,
    /// Ids of every pool member that was not retained.
    pub disposed: Vec<u64>,
}

/// Per-class herding quotas: `⌊B / #classes⌋` each, capped by class size,
/// leftover slots handed out one at a time to the most populated classes.
fn class_quotas(sizes: &BTreeMap<usize, usize>, budget: usize) -> BTreeMap<usize, usize> {
    let base = budget / sizes.len().max(1);
    let mut quotas: BTreeMap<usize, usize> = sizes.iter().map(|(&c, &n)| (c, base.min(n))).collect();
    let mut left = budget - quotas.values().sum::<usize>();
    let mut by_size: Vec<usize> = sizes.keys().copied().collect();
    by_size.sort_by(|a, b| sizes[b].cmp(&sizes[a]).then(a.cmp(b)));
    while left > 0 {
        let mut gave = false;
        for c in &by_size {
            if left == 0 {
                break;
            }
            let q = quotas.get_mut(c).unwrap();
            if *q < sizes[c] {
                *q += 1;
                left -= 1;
                gave = true;
            }
        }
        if !gave {
            break;
        }
    }
    quotas
}

fn herding_indices(params: &ModelParams, pool: &[Sample], budget: usize, exec: Exec) -> Result<Vec<usize>> {
    let embedded: Vec<DVector<f64>> = exec
        .map(pool, |s| params.embed(&s.raw))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in pool.iter().enumerate() {
        members.entry(s.label).or_default().push(i);
    }
    let sizes = members.iter().map(|(&c, m)| (c, m.len())).collect();
    let quotas = class_quotas(&sizes, budget);
    let index_of: BTreeMap<u64, usize> = pool.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut out = Vec::with_capacity(budget);
    for (label, idx) in &members {
        let items: Vec<(u64, DVector<f64>)> = idx.iter().map(|&i| (pool[i].id, embedded[i].clone())).collect();
        out.extend(herd_class(&items, quotas[label]).into_iter().map(|id| index_of[&id]));
    }
    Ok(out)
}

/// Forms `P_k = D_k ∪ M_ER^(k-1)` and keeps at most `budget` of it.
///
/// The current mission's training samples and the old buffer are consumed;
/// anything not kept is dropped and reported in `disposed`.
pub fn update_buffer<R: Rng + ?Sized>(
    policy: SelectionPolicy,
    params: &ModelParams,
    current: Vec<Sample>,
    old: ReplayBuffer,
    budget: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<BufferUpdate> {
    if budget == 0 {
        return Err(Error::Config("buffer budget must be at least 1".into()));
    }
    let new_ids: BTreeSet<u64> = current.iter().map(|s| s.id).collect();
    let (old_samples, mut logits) = old.into_parts();
    let mut pool = current;
    pool.extend(old_samples);

    let mut scores = BTreeMap::new();
    let keep: Vec<usize> = match policy {
        SelectionPolicy::Reservoir { .. } => reservoir_update(pool.len(), budget, rng),
        SelectionPolicy::Herding => herding_indices(params, &pool, budget, exec)?,
        SelectionPolicy::Scored { scorer, allocator } => {
            let s = scorer.score(params, &pool, exec)?;
            let scored = ScoredPool::new(pool, s)?;
            let keep = allocate(allocator, &scored, budget);
            for &i in &keep {
                scores.insert(scored.pool()[i].id, scored.scores()[i]);
            }
            pool = scored.into_parts().0;
            keep
        }
    };

    let mut kept = vec![false; pool.len()];
    for &i in &keep {
        kept[i] = true;
    }
    let disposed: Vec<u64> = pool.iter().zip(&kept).filter(|(_, &k)| !k).map(|(s, _)| s.id).collect();
    let mut slots: Vec<Option<Sample>> = pool.into_iter().map(Some).collect();
    let samples: Vec<Sample> = keep.iter().map(|&i| slots[i].take().expect("indices are distinct")).collect();

    let store_logits = matches!(policy, SelectionPolicy::Reservoir { store_logits: true });
    logits.retain(|id, _| samples.iter().any(|s| s.id == *id));
    if store_logits {
        for s in samples.iter().filter(|s| new_ids.contains(&s.id)) {
            let (_, v) = params.forward(&s.raw)?;
            logits.insert(s.id, v.as_slice().to_vec());
        }
    } else {
        logits.clear();
    }
    let buffer = ReplayBuffer::from_parts(budget, samples, logits, scores)?;
    Ok(BufferUpdate { buffer, disposed })
}
