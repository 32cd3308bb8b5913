//! Place-recognition model `f = head ∘ extractor` with hand-derived gradients.
//!
//! The extractor is a single affine layer followed by `tanh`, the head an
//! affine map onto the fixed label space. Row `y` of the head weight matrix is
//! the class prototype used by diversity scoring.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::ReplayBuffer;
use crate::sample::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `D x d_in` extractor weights.
    pub extractor_weight: DMatrix<f64>,
    pub extractor_bias: DVector<f64>,
    /// `C x D` head weights; row `y` is the prototype of class `y`.
    pub head_weight: DMatrix<f64>,
    pub head_bias: DVector<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(input_dim: usize, embed_dim: usize, classes: usize) -> Self {
        Self {
            extractor_weight: DMatrix::zeros(embed_dim, input_dim),
            extractor_bias: DVector::zeros(embed_dim),
            head_weight: DMatrix::zeros(classes, embed_dim),
            head_bias: DVector::zeros(classes),
        }
    }

    /// Gaussian initialization with fan-in scaling; biases start at zero.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, embed_dim: usize, classes: usize, rng: &mut R) -> Self {
        let ext = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).unwrap();
        let head = Normal::new(0.0, 1.0 / (embed_dim as f64).sqrt()).unwrap();
        Self {
            extractor_weight: DMatrix::from_fn(embed_dim, input_dim, |_, _| ext.sample(rng)),
            extractor_bias: DVector::zeros(embed_dim),
            head_weight: DMatrix::from_fn(classes, embed_dim, |_, _| head.sample(rng)),
            head_bias: DVector::zeros(classes),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.extractor_weight.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.extractor_weight.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.head_weight.nrows()
    }

    /// Extractor output `tanh(A·raw + a)`.
    pub fn embed(&self, raw: &[f64]) -> Result<DVector<f64>> {
        if raw.len() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: raw.len() });
        }
        let x = DVectorView::from_slice(raw, raw.len());
        let mut z = &self.extractor_weight * x + &self.extractor_bias;
        z.apply(|v| *v = v.tanh());
        Ok(z)
    }

    /// Head output `W·z + b`.
    pub fn logits(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.embed_dim() {
            return Err(Error::Shape { expected: self.embed_dim(), got: z.len() });
        }
        Ok(&self.head_weight * z + &self.head_bias)
    }

    pub fn forward(&self, raw: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let z = self.embed(raw)?;
        let v = self.logits(&z)?;
        Ok((z, v))
    }

    pub fn predict(&self, raw: &[f64]) -> Result<usize> {
        let (_, v) = self.forward(raw)?;
        Ok(argmax(v.as_slice()))
    }

    /// Prototype `w_y` of class `y`.
    pub fn prototype(&self, label: usize) -> DVector<f64> {
        self.head_weight.row(label).transpose()
    }

    /// Plain SGD with separate rates for extractor and head.
    pub fn sgd_step(&self, grads: &Gradients, lr_extractor: f64, lr_head: f64) -> ModelParams {
        ModelParams {
            extractor_weight: &self.extractor_weight - &grads.extractor_weight * lr_extractor,
            extractor_bias: &self.extractor_bias - &grads.extractor_bias * lr_extractor,
            head_weight: &self.head_weight - &grads.head_weight * lr_head,
            head_bias: &self.head_bias - &grads.head_bias * lr_head,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.extractor_weight.as_slice(),
            self.extractor_bias.as_slice(),
            self.head_weight.as_slice(),
            self.head_bias.as_slice(),
        ]
        .iter()
        .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Backpropagates `d_logits` for one sample whose forward pass gave `z`.
    fn accumulate(&self, grads: &mut Gradients, raw: &[f64], z: &DVector<f64>, d_logits: &DVector<f64>) {
        grads.head_weight.ger(1.0, d_logits, z, 1.0);
        grads.head_bias += d_logits;
        let mut du = self.head_weight.tr_mul(d_logits);
        du.zip_apply(z, |d, zi| *d *= 1.0 - zi * zi);
        let x = DVectorView::from_slice(raw, raw.len());
        grads.extractor_weight.ger(1.0, &du, &x, 1.0);
        grads.extractor_bias += du;
    }
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable log-softmax (max-shifted).
pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    v.iter().map(|x| x - lse).collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    log_softmax(v).into_iter().map(f64::exp).collect()
}

/// Cross-entropy `-log softmax(v)[label]`.
pub fn ce_loss(v: &[f64], label: usize) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    (lse - v[label]).max(0.0)
}

/// `KL(p_teacher || p_student)` from logits.
pub fn kl_divergence(teacher: &[f64], student: &[f64]) -> f64 {
    let lt = log_softmax(teacher);
    let ls = log_softmax(student);
    lt.iter()
        .zip(&ls)
        .map(|(t, s)| {
            let p = t.exp();
            if p == 0.0 {
                0.0
            } else {
                p * (t - s)
            }
        })
        .sum()
}

/// Mean over classes of the squared logit difference.
pub fn logit_mse(current: &[f64], stored: &[f64]) -> f64 {
    current.iter().zip(stored).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / current.len() as f64
}

/// Per-source draw counts of a mixed mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quotas {
    pub current: usize,
    pub anchors: usize,
    pub replay: usize,
}

impl Default for Quotas {
    fn default() -> Self {
        Self { current: 20, anchors: 10, replay: 10 }
    }
}

impl Quotas {
    pub fn total(&self) -> usize {
        self.current + self.anchors + self.replay
    }
}

#[derive(Debug, Clone, Default)]
pub struct MixedBatch<'a> {
    pub current: Vec<&'a Sample>,
    pub anchors: Vec<&'a Sample>,
    pub replay: Vec<&'a Sample>,
    /// Stored logits aligned with `replay`, present only for buffers that keep them.
    pub replay_logits: Option<Vec<&'a [f64]>>,
}

impl MixedBatch<'_> {
    pub fn sample_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.current.iter().chain(&self.anchors).chain(&self.replay).map(|s| s.id)
    }
}

fn draw<'a, R: Rng + ?Sized>(source: &'a [Sample], quota: usize, rng: &mut R) -> Vec<&'a Sample> {
    if source.is_empty() {
        return Vec::new();
    }
    (0..quota).map(|_| &source[rng.random_range(0..source.len())]).collect()
}

/// One random stream per batch part, so that drawing from one source never
/// shifts the draws of another.
#[derive(Debug, Clone)]
pub struct BatchRng {
    current: ChaCha8Rng,
    anchors: ChaCha8Rng,
    replay: ChaCha8Rng,
}

impl BatchRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        let stream = |n| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(n);
            r
        };
        Self { current: stream(1), anchors: stream(2), replay: stream(3) }
    }
}

/// Draws each part uniformly with replacement up to its quota.
pub fn build_mixed_batch<'a>(
    current: &'a [Sample],
    anchors: &'a [Sample],
    buffer: &'a ReplayBuffer,
    quotas: Quotas,
    rng: &mut BatchRng,
) -> Result<MixedBatch<'a>> {
    if current.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let current = draw(current, quotas.current, &mut rng.current);
    let anchors = draw(anchors, quotas.anchors, &mut rng.anchors);
    let replay = draw(buffer.samples(), quotas.replay, &mut rng.replay);
    let replay_logits = if buffer.has_logits() {
        Some(
            replay
                .iter()
                .map(|s| buffer.logits(s.id).map(Vec::as_slice))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Invariant("replay sample without stored logits".into()))?,
        )
    } else {
        None
    };
    Ok(MixedBatch { current, anchors, replay, replay_logits })
}

/// Method-specific regularizer added on top of the three cross-entropy terms.
#[derive(Debug, Clone, Copy, Default)]
pub enum Distillation<'a> {
    #[default]
    None,
    /// KL to the teacher over the current part.
    Lwf { teacher: &'a ModelParams, weight: f64 },
    /// Logit MSE to the stored logits over the replay part.
    DerPlusPlus { weight: f64 },
    /// KL to the teacher over current, replay and anchors.
    Icarl { teacher: &'a ModelParams, weight: f64 },
}

/// Weights of the anchor and replay cross-entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub anchors: f64,
    pub replay: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { anchors: 1.0, replay: 1.0 }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    Current,
    Anchor,
    Replay,
}

/// Total loss of a mixed batch and its exact gradient.
///
/// `mean CE(current) + w_ex·mean CE(anchors) + w_er·mean CE(replay)` plus the
/// distillation term; empty parts contribute zero.
pub fn total_loss_and_grads(
    params: &ModelParams,
    batch: &MixedBatch<'_>,
    weights: LossWeights,
    distill: Distillation<'_>,
) -> Result<(f64, Gradients)> {
    if batch.current.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if weights.anchors < 0.0 || weights.replay < 0.0 {
        return Err(Error::Config("loss weights must be nonnegative".into()));
    }
    let mut grads = ModelParams::zeros(params.input_dim(), params.embed_dim(), params.num_classes());
    let mut loss = 0.0;
    let n_all = (batch.current.len() + batch.anchors.len() + batch.replay.len()) as f64;

    let parts = [
        (Part::Current, &batch.current, 1.0),
        (Part::Anchor, &batch.anchors, weights.anchors),
        (Part::Replay, &batch.replay, weights.replay),
    ];
    for (part, samples, ce_weight) in parts {
        if samples.is_empty() {
            continue;
        }
        let ce_scale = ce_weight / samples.len() as f64;
        let distilled = match (distill, part) {
            (Distillation::Lwf { weight, .. }, Part::Current) => weight != 0.0,
            (Distillation::Icarl { weight, .. }, _) => weight != 0.0,
            (Distillation::DerPlusPlus { weight }, Part::Replay) => weight != 0.0,
            _ => false,
        };
        // a zero-weight part must not touch the gradient, not even with zeros
        if ce_scale == 0.0 && !distilled {
            continue;
        }
        for (i, s) in samples.iter().enumerate() {
            let (z, v) = params.forward(&s.raw)?;
            if s.label >= params.num_classes() {
                return Err(Error::InvalidLabel { label: s.label, classes: params.num_classes() });
            }
            let mut dv = DVector::zeros(v.len());
            if ce_scale != 0.0 {
                loss += ce_scale * ce_loss(v.as_slice(), s.label);
                let p = softmax(v.as_slice());
                for (c, pc) in p.iter().enumerate() {
                    dv[c] += ce_scale * (pc - if c == s.label { 1.0 } else { 0.0 });
                }
            }
            let kl_scale = match (distill, part) {
                (Distillation::Lwf { teacher, weight }, Part::Current) => Some((teacher, weight / samples.len() as f64)),
                (Distillation::Icarl { teacher, weight }, _) => Some((teacher, weight / n_all)),
                _ => None,
            };
            if let Some((teacher, scale)) = kl_scale {
                let (_, vt) = teacher.forward(&s.raw)?;
                loss += scale * kl_divergence(vt.as_slice(), v.as_slice());
                let ps = softmax(v.as_slice());
                let pt = softmax(vt.as_slice());
                for c in 0..dv.len() {
                    dv[c] += scale * (ps[c] - pt[c]);
                }
            }
            if let (Distillation::DerPlusPlus { weight }, Part::Replay) = (distill, part) {
                let stored = batch
                    .replay_logits
                    .as_ref()
                    .and_then(|l| l.get(i))
                    .ok_or_else(|| Error::Invariant("logit distillation needs stored logits".into()))?;
                if stored.len() != v.len() {
                    return Err(Error::Shape { expected: v.len(), got: stored.len() });
                }
                let scale = weight / samples.len() as f64;
                loss += scale * logit_mse(v.as_slice(), stored);
                let c = v.len() as f64;
                for k in 0..dv.len() {
                    dv[k] += scale * 2.0 * (v[k] - stored[k]) / c;
                }
            }
            params.accumulate(&mut grads, &s.raw, &z, &dv);
        }
    }
    Ok((loss, grads))
}
