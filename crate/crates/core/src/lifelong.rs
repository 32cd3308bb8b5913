//! Learn-and-Dispose training over a mission sequence.
//!
//! Each step trains on the incoming mission with mixed batches, refreshes the
//! replay buffer from `D_k ∪ M_ER`, and drops everything not retained. Raw
//! training data of a finished mission is never touched again.

use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{update_buffer, Allocator, AnchorSet, ReplayBuffer, Scorer, SelectionPolicy};
use crate::metrics::{correct_count, pooled_accuracy, CriteriaTrace, MetricsReport, ResultMatrix};
use crate::model::{build_mixed_batch, total_loss_and_grads, BatchRng, Distillation, LossWeights, ModelParams, Quotas};
use crate::par::Exec;
use crate::sample::Sample;
use crate::synth::{Benchmark, OrderKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ft")]
    Ft,
    #[serde(rename = "ft-ex")]
    FtEx,
    #[serde(rename = "lwf")]
    DilLwf,
    #[serde(rename = "er")]
    DilEr,
    #[serde(rename = "derpp")]
    DilDerpp,
    #[serde(rename = "icarl")]
    DilIcarl,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "lbs")]
    Lbs,
    #[serde(rename = "dbs")]
    Dbs,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Ft,
        Method::FtEx,
        Method::DilLwf,
        Method::DilEr,
        Method::DilDerpp,
        Method::DilIcarl,
        Method::Random,
        Method::Lbs,
        Method::Dbs,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ft => "ft",
            Method::FtEx => "ft-ex",
            Method::DilLwf => "lwf",
            Method::DilEr => "er",
            Method::DilDerpp => "derpp",
            Method::DilIcarl => "icarl",
            Method::Random => "random",
            Method::Lbs => "lbs",
            Method::Dbs => "dbs",
        }
    }

    pub fn uses_anchors(&self) -> bool {
        !matches!(self, Method::Ft | Method::DilLwf | Method::DilEr)
    }

    pub fn uses_buffer(&self) -> bool {
        !matches!(self, Method::Ft | Method::FtEx | Method::DilLwf)
    }

    pub fn needs_teacher(&self) -> bool {
        matches!(self, Method::DilLwf | Method::DilIcarl)
    }

    /// Score-based methods, whose allocator is configurable.
    pub fn is_scored(&self) -> bool {
        matches!(self, Method::Lbs | Method::Dbs)
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "ft+ex" | "ftex" => "ft-ex",
            "dil-lwf" => "lwf",
            "dil-er" => "er",
            "der++" | "dil-der++" | "dil-derpp" => "derpp",
            "dil-icarl" => "icarl",
            other => other,
        };
        Method::ALL.into_iter().find(|m| m.name() == alias).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(Method::name).collect();
            format!("unknown method '{s}' (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub method: Method,
    /// Used by the score-based methods only.
    pub allocator: Allocator,
    pub budget: usize,
    pub lambda_ex: f64,
    pub lambda_er: f64,
    pub lambda_lwf: f64,
    /// DER++ logit-matching weight.
    pub beta: f64,
    /// Weight of the prototype term in the diversity score.
    pub dbs_lambda: f64,
    pub iterations: usize,
    /// Satellite pretraining runs `iterations * pretrain_multiplier` steps.
    pub pretrain_multiplier: usize,
    /// Both learning rates are multiplied by this during satellite pretraining.
    pub pretrain_lr_scale: f64,
    pub quotas: Quotas,
    pub lr_extractor: f64,
    pub lr_head: f64,
    pub embed_dim: usize,
    pub anchor_cap: usize,
    /// Distance tolerance in meters.
    pub tau: f64,
    pub seed: u64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Dbs,
            allocator: Allocator::MinGuar,
            budget: 48,
            lambda_ex: 1.0,
            lambda_er: 1.0,
            lambda_lwf: 1.0,
            beta: 0.5,
            dbs_lambda: 1.0,
            iterations: 200,
            pretrain_multiplier: 5,
            pretrain_lr_scale: 3.0,
            quotas: Quotas::default(),
            lr_extractor: 3e-3,
            lr_head: 2e-2,
            embed_dim: 16,
            anchor_cap: 12,
            tau: 300.0,
            seed: 0,
        }
    }
}

impl MethodConfig {
    pub fn for_method(method: Method) -> Self {
        Self { method, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda_ex, self.lambda_er, self.lambda_lwf, self.beta, self.dbs_lambda];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        let rates = [self.lr_extractor, self.lr_head, self.pretrain_lr_scale];
        if !rates.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("buffer budget must be at least 1".into()));
        }
        if self.iterations == 0 || self.pretrain_multiplier == 0 || self.quotas.current == 0 {
            return Err(Error::Config("training needs at least one iteration and one current sample per batch".into()));
        }
        if self.embed_dim == 0 || self.anchor_cap == 0 {
            return Err(Error::Config("embedding size and anchor cap must be positive".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn selection_policy(&self) -> Option<SelectionPolicy> {
        match self.method {
            Method::Ft | Method::FtEx | Method::DilLwf => None,
            Method::DilEr | Method::Random => Some(SelectionPolicy::Reservoir { store_logits: false }),
            Method::DilDerpp => Some(SelectionPolicy::Reservoir { store_logits: true }),
            Method::DilIcarl => Some(SelectionPolicy::Herding),
            Method::Lbs => Some(SelectionPolicy::Scored { scorer: Scorer::Loss, allocator: self.allocator }),
            Method::Dbs => Some(SelectionPolicy::Scored {
                scorer: Scorer::Diversity { lambda: self.dbs_lambda },
                allocator: self.allocator,
            }),
        }
    }

    fn loss_weights(&self) -> LossWeights {
        LossWeights {
            anchors: if self.method.uses_anchors() { self.lambda_ex } else { 0.0 },
            replay: if self.method.uses_buffer() { self.lambda_er } else { 0.0 },
        }
    }

    fn distillation<'a>(&self, teacher: Option<&'a ModelParams>) -> Distillation<'a> {
        match (self.method, teacher) {
            (Method::DilLwf, Some(t)) => Distillation::Lwf { teacher: t, weight: self.lambda_lwf },
            (Method::DilIcarl, Some(t)) => Distillation::Icarl { teacher: t, weight: self.lambda_lwf },
            (Method::DilDerpp, _) => Distillation::DerPlusPlus { weight: self.beta },
            _ => Distillation::None,
        }
    }
}

/// Records which training ids were disposed and flags any later read of them.
#[derive(Debug, Clone, Default)]
pub struct DisposalAudit {
    disposed: HashSet<u64>,
    violations: BTreeSet<u64>,
    reads: usize,
}

impl DisposalAudit {
    pub fn read(&mut self, ids: impl IntoIterator<Item = u64>) {
        for id in ids {
            self.reads += 1;
            if self.disposed.contains(&id) {
                self.violations.insert(id);
            }
        }
    }

    pub fn dispose(&mut self, ids: impl IntoIterator<Item = u64>) {
        self.disposed.extend(ids);
    }

    pub fn violations(&self) -> &BTreeSet<u64> {
        &self.violations
    }

    pub fn disposed_count(&self) -> usize {
        self.disposed.len()
    }

    pub fn reads(&self) -> usize {
        self.reads
    }
}

/// Everything the learner carries between missions.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub params: ModelParams,
    pub anchors: AnchorSet,
    pub buffer: ReplayBuffer,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    /// Frozen copy of the parameters at the start of the step, for methods
    /// that distill from it.
    pub teacher: Option<ModelParams>,
    pub last_loss: f64,
    pub update_nanos: Option<u64>,
    pub disposed: usize,
}

/// Trains `Θ_0` on the satellite set, which must cover every class.
pub fn pretrain_on_satellite(satellite: &[Sample], num_classes: usize, cfg: &MethodConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let input_dim = satellite.first().ok_or(Error::EmptySet)?.raw.len();
    let present: BTreeSet<usize> = satellite.iter().map(|s| s.label).collect();
    if let Some(missing) = (0..num_classes).find(|c| !present.contains(c)) {
        return Err(Error::MissingClass(missing));
    }
    if let Some(&bad) = present.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidLabel { label: bad, classes: num_classes });
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(input_dim, cfg.embed_dim, num_classes, &mut init_rng);
    let mut rng = BatchRng::seed_from_u64(cfg.seed ^ 0xA5A5_0000);
    let quotas = Quotas { current: cfg.quotas.total(), anchors: 0, replay: 0 };
    let empty = ReplayBuffer::new(1);
    for _ in 0..cfg.iterations * cfg.pretrain_multiplier {
        let batch = build_mixed_batch(satellite, &[], &empty, quotas, &mut rng)?;
        let (_, g) = total_loss_and_grads(&params, &batch, LossWeights::default(), Distillation::None)?;
        params = params.sgd_step(&g, cfg.lr_extractor * cfg.pretrain_lr_scale, cfg.lr_head * cfg.pretrain_lr_scale);
    }
    Ok(params)
}

/// One Learn-and-Dispose step. `train` is consumed: whatever the buffer does
/// not keep is dropped before this returns.
pub fn run_mission_step(
    state: &mut LearnerState,
    train: Vec<Sample>,
    cfg: &MethodConfig,
    batch_rng: &mut BatchRng,
    select_rng: &mut ChaCha8Rng,
    exec: Exec,
    mut audit: Option<&mut DisposalAudit>,
) -> Result<StepReport> {
    if train.is_empty() {
        return Err(Error::EmptySet);
    }
    let teacher = cfg.method.needs_teacher().then(|| state.params.clone());
    let weights = cfg.loss_weights();
    let distill = cfg.distillation(teacher.as_ref());
    let anchors: &[Sample] = if cfg.method.uses_anchors() { state.anchors.samples() } else { &[] };

    let mut last_loss = f64::NAN;
    for _ in 0..cfg.iterations {
        let batch = build_mixed_batch(&train, anchors, &state.buffer, cfg.quotas, batch_rng)?;
        if let Some(a) = audit.as_deref_mut() {
            a.read(batch.sample_ids());
        }
        let (loss, g) = total_loss_and_grads(&state.params, &batch, weights, distill)?;
        state.params = state.params.sgd_step(&g, cfg.lr_extractor, cfg.lr_head);
        last_loss = loss;
    }
    if !state.params.is_finite() {
        return Err(Error::Invariant(format!("parameters diverged at step {}", state.step + 1)));
    }

    let (update_nanos, disposed) = match cfg.selection_policy() {
        Some(policy) => {
            if let Some(a) = audit.as_deref_mut() {
                a.read(train.iter().chain(state.buffer.samples()).map(|s| s.id));
            }
            let old = std::mem::replace(&mut state.buffer, ReplayBuffer::new(cfg.budget));
            let started = Instant::now();
            let update = update_buffer(policy, &state.params, train, old, cfg.budget, select_rng, exec)?;
            let nanos = started.elapsed().as_nanos() as u64;
            state.buffer = update.buffer;
            (Some(nanos), update.disposed)
        }
        None => (None, train.into_iter().map(|s| s.id).collect()),
    };
    let disposed_count = disposed.len();
    if let Some(a) = audit {
        a.dispose(disposed);
    }
    state.step += 1;
    Ok(StepReport { teacher, last_loss, update_nanos, disposed: disposed_count })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub id: u64,
    pub label: usize,
    pub mission: u32,
    pub domain_tag: String,
    pub score: Option<f64>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BufferSnapshot {
    pub step: usize,
    pub mission: u32,
    pub entries: Vec<SnapshotEntry>,
}

pub fn snapshot(params: &ModelParams, buffer: &ReplayBuffer, step: usize, mission: u32) -> Result<BufferSnapshot> {
    let entries = buffer
        .samples()
        .iter()
        .map(|s| {
            Ok(SnapshotEntry {
                id: s.id,
                label: s.label,
                mission: s.mission,
                domain_tag: s.domain_tag.clone(),
                score: buffer.score(s.id),
                embedding: params.embed(&s.raw)?.as_slice().to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(BufferSnapshot { step, mission, entries })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSummary {
    pub mission: u32,
    pub buffer_len: usize,
    /// Distinct classes held by the replay buffer after the update.
    pub buffer_classes: usize,
    pub anchors_len: usize,
    pub update_nanos: Option<u64>,
    pub last_loss: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub exec: Exec,
    pub snapshots: bool,
    pub audit: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub order: Vec<u32>,
    pub matrix: ResultMatrix,
    pub trace: CriteriaTrace,
    pub report: MetricsReport,
    pub state: LearnerState,
    pub steps: Vec<StepSummary>,
    pub snapshots: Vec<BufferSnapshot>,
    pub audit: Option<DisposalAudit>,
}

fn eval_counts(params: &ModelParams, bench: &Benchmark, mission: u32, cfg: &MethodConfig, exec: Exec) -> Result<(usize, usize)> {
    let set = bench.test.get(&mission).filter(|t| !t.is_empty()).ok_or(Error::EmptySet)?;
    Ok((correct_count(params, set, bench.map(), cfg.tau, exec)?, set.len()))
}

fn unvisited_accuracy(params: &ModelParams, bench: &Benchmark, cfg: &MethodConfig, exec: Exec) -> Result<f64> {
    if bench.unvisited.is_empty() {
        return Ok(f64::NAN);
    }
    let hits = correct_count(params, &bench.unvisited, bench.map(), cfg.tau, exec)?;
    Ok(hits as f64 / bench.unvisited.len() as f64)
}

/// Pretrains on the satellite set, then learns `order` mission by mission,
/// evaluating every mission after every step.
pub fn run_sequence(bench: &Benchmark, order: &[u32], cfg: &MethodConfig, opts: RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    if order.is_empty() {
        return Err(Error::Config("empty mission order".into()));
    }
    let unique: BTreeSet<u32> = order.iter().copied().collect();
    if unique.len() != order.len() {
        return Err(Error::Config("mission order repeats a mission".into()));
    }
    for id in order {
        if bench.train.get(id).is_none_or(Vec::is_empty) {
            return Err(Error::Config(format!("mission {id} has no training samples")));
        }
    }
    let exec = opts.exec;
    let params = pretrain_on_satellite(&bench.satellite, bench.num_classes(), cfg)?;
    let anchors = if cfg.method.uses_anchors() {
        AnchorSet::build(&params, &bench.satellite, cfg.anchor_cap, exec)?
    } else {
        AnchorSet::empty()
    };
    let mut state = LearnerState { params, anchors, buffer: ReplayBuffer::new(cfg.budget), step: 0 };

    let mut batch_rng = BatchRng::seed_from_u64(cfg.seed);
    let mut select_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    select_rng.set_stream(7);
    let mut audit = opts.audit.then(DisposalAudit::default);

    let k = order.len();
    let mut matrix = ResultMatrix::zeros(k);
    let mut trace = CriteriaTrace { c1: vec![unvisited_accuracy(&state.params, bench, cfg, exec)?], ..Default::default() };
    let mut steps = Vec::with_capacity(k);
    let mut snapshots = Vec::new();

    for (i, &mission) in order.iter().enumerate() {
        let train = bench.train[&mission].clone();
        let report = run_mission_step(&mut state, train, cfg, &mut batch_rng, &mut select_rng, exec, audit.as_mut())?;

        let counts: Vec<(usize, usize)> =
            order.iter().map(|&j| eval_counts(&state.params, bench, j, cfg, exec)).collect::<Result<_>>()?;
        matrix.set_row(i, counts.iter().map(|&(h, n)| h as f64 / n as f64).collect());
        trace.c1.push(unvisited_accuracy(&state.params, bench, cfg, exec)?);
        trace.c2.push(matrix.get(i, i));
        trace.c3.push(if i == 0 { None } else { Some(pooled_accuracy(&counts[..i])?) });

        steps.push(StepSummary {
            mission,
            buffer_len: state.buffer.len(),
            buffer_classes: state.buffer.classes().len(),
            anchors_len: if cfg.method.uses_anchors() { state.anchors.len() } else { 0 },
            update_nanos: report.update_nanos,
            last_loss: report.last_loss,
        });
        if opts.snapshots && cfg.method.uses_buffer() {
            snapshots.push(snapshot(&state.params, &state.buffer, i + 1, mission)?);
        }
    }

    let mut report = MetricsReport::new(&matrix, &trace, cfg.seed, cfg.method.name().into(), "custom".into())?;
    report.allocator = cfg.method.is_scored().then(|| cfg.allocator.name().into());
    report.budget = cfg.method.uses_buffer().then_some(cfg.budget);

    Ok(RunOutput { order: order.to_vec(), matrix, trace, report, state, steps, snapshots, audit })
}

/// [`run_sequence`] over one of the benchmark's stored curricula.
pub fn run_order(bench: &Benchmark, kind: OrderKind, cfg: &MethodConfig, opts: RunOptions) -> Result<RunOutput> {
    let mut out = run_sequence(bench, bench.order(kind), cfg, opts)?;
    out.report.order = kind.name().into();
    Ok(out)
}
