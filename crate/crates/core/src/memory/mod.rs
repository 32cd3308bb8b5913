//! Heterogeneous memory: the immutable satellite anchor set and the
//! budget-bounded replay buffer, plus the machinery that decides what the
//! buffer keeps after each mission.

mod allocation;
mod herding;
mod reservoir;
mod scoring;
mod update;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::par::Exec;
use crate::sample::Sample;

pub use allocation::{allocate, allocate_global, allocate_min_guar, allocate_round_robin, rank_order, Allocator};
pub use herding::{herd_class, herding_select, HerdingSelection};
pub use reservoir::reservoir_update;
pub use scoring::{cosine, score_dbs, score_lbs, Scorer};
pub use update::{update_buffer, BufferUpdate, SelectionPolicy};

/// Satellite exemplars chosen by herding before deployment. Never modified.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    samples: Vec<Sample>,
    per_class_cap: usize,
}

impl AnchorSet {
    /// Herds up to `per_class_cap` satellite samples per class, using the
    /// embeddings of `params`.
    pub fn build(params: &ModelParams, satellite: &[Sample], per_class_cap: usize, exec: Exec) -> Result<Self> {
        if per_class_cap == 0 {
            return Err(Error::Config("anchor cap must be at least 1".into()));
        }
        let embeddings = exec.map(satellite, |s| params.embed(&s.raw));
        let mut by_class: BTreeMap<usize, Vec<(u64, nalgebra::DVector<f64>)>> = BTreeMap::new();
        for (s, z) in satellite.iter().zip(embeddings) {
            by_class.entry(s.label).or_default().push((s.id, z?));
        }
        let selection = herding_select(&by_class, per_class_cap);
        let by_id: BTreeMap<u64, &Sample> = satellite.iter().map(|s| (s.id, s)).collect();
        let samples = selection
            .per_class
            .values()
            .flatten()
            .map(|id| by_id[id].clone())
            .collect();
        Ok(Self { samples, per_class_cap })
    }

    pub fn empty() -> Self {
        Self { samples: Vec::new(), per_class_cap: 0 }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn per_class_cap(&self) -> usize {
        self.per_class_cap
    }
}

/// Dynamic replay memory holding at most `budget` samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayBuffer {
    budget: usize,
    samples: Vec<Sample>,
    /// Logits recorded when a sample entered the buffer (logit-distillation only).
    stored_logits: BTreeMap<u64, Vec<f64>>,
    /// Utility score each sample had at the latest selection, when scored.
    scores: BTreeMap<u64, f64>,
}

impl ReplayBuffer {
    pub fn new(budget: usize) -> Self {
        Self { budget, ..Default::default() }
    }

    pub fn from_samples(budget: usize, samples: Vec<Sample>) -> Result<Self> {
        Self::from_parts(budget, samples, BTreeMap::new(), BTreeMap::new())
    }

    pub fn from_parts(
        budget: usize,
        samples: Vec<Sample>,
        stored_logits: BTreeMap<u64, Vec<f64>>,
        scores: BTreeMap<u64, f64>,
    ) -> Result<Self> {
        if samples.len() > budget {
            return Err(Error::Invariant(format!("buffer holds {} samples over budget {budget}", samples.len())));
        }
        let present = |id: &u64| samples.iter().any(|s| s.id == *id);
        if !stored_logits.keys().all(present) || !scores.keys().all(present) {
            return Err(Error::Invariant("buffer metadata refers to an absent sample".into()));
        }
        Ok(Self { budget, samples, stored_logits, scores })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_logits(&self) -> bool {
        !self.stored_logits.is_empty()
    }

    pub fn logits(&self, id: u64) -> Option<&Vec<f64>> {
        self.stored_logits.get(&id)
    }

    pub fn score(&self, id: u64) -> Option<f64> {
        self.scores.get(&id).copied()
    }

    /// Distinct labels held by the buffer.
    pub fn classes(&self) -> std::collections::BTreeSet<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub(crate) fn into_parts(self) -> (Vec<Sample>, BTreeMap<u64, Vec<f64>>) {
        (self.samples, self.stored_logits)
    }
}

/// Candidate pool together with the utility of each member.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    pool: Vec<Sample>,
    scores: Vec<f64>,
}

impl ScoredPool {
    pub fn new(pool: Vec<Sample>, scores: Vec<f64>) -> Result<Self> {
        if pool.len() != scores.len() {
            return Err(Error::Shape { expected: pool.len(), got: scores.len() });
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Invariant(format!("non-finite utility score {bad}")));
        }
        Ok(Self { pool, scores })
    }

    pub fn pool(&self) -> &[Sample] {
        &self.pool
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Sample>, Vec<f64>) {
        (self.pool, self.scores)
    }
}
