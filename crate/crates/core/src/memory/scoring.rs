//! Utility scores for buffer candidates. Higher means more worth keeping.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ce_loss, ModelParams};
use crate::par::Exec;
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scorer {
    /// Cross-entropy under the current model: keep hard samples.
    Loss,
    /// Negative redundancy: keep samples far from the pool and their prototype.
    Diversity { lambda: f64 },
}

impl Scorer {
    pub fn score(&self, params: &ModelParams, pool: &[Sample], exec: Exec) -> Result<Vec<f64>> {
        match *self {
            Scorer::Loss => score_lbs(params, pool, exec),
            Scorer::Diversity { lambda } => score_dbs(params, pool, lambda, exec),
        }
    }
}

/// Cosine similarity; zero whenever either vector is zero.
pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

fn unit(z: &DVector<f64>) -> DVector<f64> {
    let n = z.norm();
    if n == 0.0 {
        DVector::zeros(z.len())
    } else {
        z / n
    }
}

pub fn score_lbs(params: &ModelParams, pool: &[Sample], exec: Exec) -> Result<Vec<f64>> {
    exec.map(pool, |s| {
        let (_, v) = params.forward(&s.raw)?;
        Ok(ce_loss(v.as_slice(), s.label))
    })
    .into_iter()
    .collect()
}

/// `-R(x_i)` with `R(x_i) = Σ_{j≠i} cos(z_i, z_j) + λ·cos(z_i, w_{y_i})`.
///
/// The pairwise sum is evaluated as `u_i · (Σ_j u_j − u_i)` over unit
/// embeddings, which is linear in the pool size. Zero embeddings have a zero
/// unit vector, so their similarities are all zero.
pub fn score_dbs(params: &ModelParams, pool: &[Sample], lambda: f64, exec: Exec) -> Result<Vec<f64>> {
    let embedded: Vec<DVector<f64>> = exec
        .map(pool, |s| params.embed(&s.raw))
        .into_iter()
        .collect::<Result<_>>()?;
    let units: Vec<DVector<f64>> = exec.map(&embedded, unit);
    let mut total = DVector::zeros(params.embed_dim());
    for u in &units {
        total += u;
    }
    Ok(exec.map_range(pool.len(), |i| {
        let u = &units[i];
        let density: f64 = (0..u.len()).map(|k| u[k] * (total[k] - u[k])).sum();
        let centrality = if lambda == 0.0 {
            0.0
        } else {
            lambda * cosine(&embedded[i], &params.prototype(pool[i].label))
        };
        -(density + centrality)
    }))
}
