//! Distance-bounded accuracy, the decoupled C1/C2/C3 criteria and the
//! standard continual-learning metrics derived from the result matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::model::ModelParams;
use crate::par::Exec;
use crate::sample::Sample;

/// Number of samples whose predicted cell center lies within `tau` of the
/// ground truth.
pub fn correct_count(params: &ModelParams, eval: &[Sample], map: &GridMap, tau: f64, exec: Exec) -> Result<usize> {
    let hits = exec.map(eval, |s| -> Result<bool> {
        let predicted = params.predict(&s.raw)?;
        map.within_tolerance(predicted, s.gt, tau)
    });
    hits.into_iter().try_fold(0, |n, hit| Ok(n + usize::from(hit?)))
}

/// Spatial Recall@1 bounded by `tau` meters.
pub fn accuracy(params: &ModelParams, eval: &[Sample], map: &GridMap, tau: f64, exec: Exec) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(correct_count(params, eval, map, tau, exec)? as f64 / eval.len() as f64)
}

/// `R[i][j]`: accuracy on mission `j` after training mission `i` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    values: Vec<Vec<f64>>,
}

impl ResultMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { values: vec![vec![0.0; k]; k] }
    }

    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let k = values.len();
        if let Some(row) = values.iter().find(|r| r.len() != k) {
            return Err(Error::Shape { expected: k, got: row.len() });
        }
        if values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invariant("accuracy outside [0, 1]".into()));
        }
        Ok(Self { values })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn set_row(&mut self, i: usize, row: Vec<f64>) {
        assert_eq!(row.len(), self.k());
        self.values[i] = row;
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Header row `mission_1..mission_K`, then one line per training step.
    pub fn to_csv(&self, mission_ids: &[u32]) -> String {
        let mut out = String::from("step");
        for id in mission_ids {
            out.push_str(&format!(",mission_{id}"));
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean of the final row.
pub fn ap(r: &ResultMatrix) -> f64 {
    let k = r.k();
    (0..k).map(|j| r.get(k - 1, j)).sum::<f64>() / k as f64
}

/// Mean change on past missions between learning them and the end.
pub fn bwt(r: &ResultMatrix) -> Result<f64> {
    let k = r.k();
    if k < 2 {
        return Err(Error::Undefined("BWT"));
    }
    Ok((0..k - 1).map(|j| r.get(k - 1, j) - r.get(j, j)).sum::<f64>() / (k - 1) as f64)
}

/// Mean accuracy on each mission just before it is trained on.
pub fn fwt(r: &ResultMatrix) -> Result<f64> {
    let k = r.k();
    if k < 2 {
        return Err(Error::Undefined("FWT"));
    }
    Ok((1..k).map(|j| r.get(j - 1, j)).sum::<f64>() / (k - 1) as f64)
}

/// Per-step C1/C2/C3 values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriteriaTrace {
    /// Accuracy on the unvisited set for steps `0..=K` (step 0 is the
    /// pretrained model).
    pub c1: Vec<f64>,
    /// Accuracy on the current mission's test split, steps `1..=K`.
    pub c2: Vec<f64>,
    /// Accuracy on the pooled test splits of all earlier missions, steps
    /// `1..=K`; `None` at step 1.
    pub c3: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
}

impl CriteriaTrace {
    /// C1 and C3 at the last step, C2 averaged over all steps.
    pub fn summary(&self) -> Result<Criteria> {
        let c1 = *self.c1.last().ok_or(Error::EmptySet)?;
        if self.c2.is_empty() {
            return Err(Error::EmptySet);
        }
        let c2 = self.c2.iter().sum::<f64>() / self.c2.len() as f64;
        let c3 = self.c3.last().copied().flatten();
        Ok(Criteria { c1, c2, c3 })
    }
}

/// Pooled accuracy over several evaluation sets from their per-set hit
/// counts; every sample weighs the same.
pub fn pooled_accuracy(counts: &[(usize, usize)]) -> Result<f64> {
    let (hits, total) = counts.iter().fold((0, 0), |(h, t), &(ch, ct)| (h + ch, t + ct));
    if total == 0 {
        return Err(Error::EmptySet);
    }
    Ok(hits as f64 / total as f64)
}

/// Per-run metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: Option<f64>,
    pub c1_trace: Vec<f64>,
    pub c2_trace: Vec<f64>,
    pub c3_trace: Vec<Option<f64>>,
    pub seed: u64,
    pub method: String,
    pub order: String,
    #[serde(default)]
    pub allocator: Option<String>,
    #[serde(default)]
    pub budget: Option<usize>,
}

impl MetricsReport {
    pub fn new(r: &ResultMatrix, trace: &CriteriaTrace, seed: u64, method: String, order: String) -> Result<Self> {
        let crit = trace.summary()?;
        Ok(Self {
            ap: ap(r),
            bwt: bwt(r).ok(),
            fwt: fwt(r).ok(),
            c1: crit.c1,
            c2: crit.c2,
            c3: crit.c3,
            c1_trace: trace.c1.clone(),
            c2_trace: trace.c2.clone(),
            c3_trace: trace.c3.clone(),
            seed,
            method,
            order,
            allocator: None,
            budget: None,
        })
    }
}
