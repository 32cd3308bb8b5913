use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aerocl::lifelong::BufferSnapshot;
use aerocl::memory::Allocator;
use aerocl::{generate as generate_bench, BenchConfig, Benchmark, Exec, Method, MethodConfig, OrderKind, RunOptions, RunOutput};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::{out_root, Common};

/// Run config file. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub learner: MethodConfig,
    pub order: Option<OrderKind>,
    pub seeds: Option<Vec<u64>>,
}

/// Effective configuration, echoed as `config.json` next to the results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub bench: PathBuf,
    pub learner: MethodConfig,
    pub order: OrderKind,
    pub seeds: Vec<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct LearnerFlags {
    /// ft, ft-ex, lwf, er, derpp, icarl, random, lbs or dbs.
    #[arg(long)]
    pub method: Option<Method>,
    /// global, round-robin or min-guar (lbs and dbs only).
    #[arg(long)]
    pub allocator: Option<Allocator>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr_extractor: Option<f64>,
    #[arg(long)]
    pub lr_head: Option<f64>,
    /// Disable the data-parallel paths inside a run.
    #[arg(long)]
    pub sequential: bool,
}

impl LearnerFlags {
    fn apply(&self, cfg: &mut MethodConfig) {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(a) = self.allocator {
            cfg.allocator = a;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(i) = self.iterations {
            cfg.iterations = i;
        }
        if let Some(lr) = self.lr_extractor {
            cfg.lr_extractor = lr;
        }
        if let Some(lr) = self.lr_head {
            cfg.lr_head = lr;
        }
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub learner: LearnerFlags,
    /// forward, backward, pressure or robust.
    #[arg(long)]
    pub order: Option<OrderKind>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Also write the buffer after every step.
    #[arg(long)]
    pub snapshots: bool,
    /// Output directory [default: $AEROCL_OUT/runs/<method>-<order>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub learner: LearnerFlags,
    #[arg(long, value_delimiter = ',', default_value = "ft,ft-ex,lwf,er,derpp,icarl,random,lbs,dbs")]
    pub methods: Vec<Method>,
    /// Allocators tried for the scored methods.
    #[arg(long, value_delimiter = ',', default_value = "min-guar")]
    pub allocators: Vec<Allocator>,
    #[arg(long, value_delimiter = ',', default_value = "forward")]
    pub orders: Vec<OrderKind>,
    /// Budgets [default: the config's]
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory [default: $AEROCL_OUT/sweep]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DumpArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub learner: LearnerFlags,
    #[arg(long)]
    pub order: Option<OrderKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only this step (1-based); all steps when omitted.
    #[arg(long)]
    pub step: Option<usize>,
    /// Output directory [default: $AEROCL_OUT/buffer]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).context(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).map_err(|e| CliError::from(e).context(format!("writing {}", path.display())))
}

fn load_bench(path: &Path) -> CliResult<Benchmark> {
    if !path.exists() {
        return Err(CliError::missing(format!("benchmark file {} not found", path.display())));
    }
    Benchmark::load(path).map_err(|e| CliError::from(e).context(format!("loading {}", path.display())))
}

fn load_run_file(common: &Common) -> CliResult<RunFile> {
    match &common.config {
        Some(p) if !p.exists() => Err(CliError::usage(format!("config file {} not found", p.display()))),
        Some(p) => read_json(p),
        None => Ok(RunFile::default()),
    }
}

pub fn generate(config: Option<&Path>, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let cfg: BenchConfig = match config {
        Some(p) if !p.exists() => return Err(CliError::usage(format!("config file {} not found", p.display()))),
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    let bench = generate_bench(&cfg, seed)?;
    let out = out.unwrap_or_else(|| out_root().join(format!("bench-seed{seed}.jsonl")));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    bench.save(&out)?;
    let sizes: Vec<String> = bench
        .cl_missions()
        .map(|m| format!("{}:{}", m.id, bench.train[&m.id].len() + bench.test[&m.id].len()))
        .collect();
    println!(
        "wrote {}: {} cells, {} CL missions [{}], {} unvisited missions ({} samples), {} satellite samples",
        out.display(),
        bench.num_classes(),
        bench.cl_missions().count(),
        sizes.join(" "),
        bench.unvisited_missions().count(),
        bench.unvisited.len(),
        bench.satellite.len()
    );
    Ok(())
}

fn run_label(cfg: &MethodConfig) -> String {
    if cfg.method.is_scored() {
        format!("{}-{}", cfg.method.name(), cfg.allocator.name())
    } else {
        cfg.method.name().to_string()
    }
}

#[derive(Serialize)]
struct Timing {
    /// Buffer-update wall-clock per step, in nanoseconds.
    update_nanos: Vec<Option<u64>>,
    total_seconds: f64,
}

fn trace_csv(out: &RunOutput) -> String {
    let mut s = String::from("step,c1,c2,c3\n");
    let t = &out.trace;
    for k in 0..t.c1.len() {
        let c2 = if k == 0 { String::new() } else { t.c2[k - 1].to_string() };
        let c3 = if k == 0 { String::new() } else { t.c3[k - 1].map(|v| v.to_string()).unwrap_or_default() };
        s.push_str(&format!("{k},{},{c2},{c3}\n", t.c1[k]));
    }
    s
}

fn snapshot_jsonl(snap: &BufferSnapshot) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    for e in &snap.entries {
        serde_json::to_writer(&mut buf, e).map_err(|e| CliError::Internal(e.into()))?;
        buf.write_all(b"\n")?;
    }
    Ok(buf)
}

/// Runs one seed and writes its files under `dir`.
fn run_one(bench: &Benchmark, order: OrderKind, cfg: &MethodConfig, exec: Exec, snapshots: bool, dir: &Path) -> CliResult<RunOutput> {
    let started = Instant::now();
    let out = aerocl::run_order(bench, order, cfg, RunOptions { exec, snapshots, audit: false })?;
    let total_seconds = started.elapsed().as_secs_f64();
    write_file(&dir.join("matrix.csv"), out.matrix.to_csv(&out.order).as_bytes())?;
    let metrics = serde_json::to_string_pretty(&out.report).map_err(|e| CliError::Internal(e.into()))?;
    write_file(&dir.join("metrics.json"), metrics.as_bytes())?;
    write_file(&dir.join("trace.csv"), trace_csv(&out).as_bytes())?;
    let timing = Timing { update_nanos: out.steps.iter().map(|s| s.update_nanos).collect(), total_seconds };
    let timing = serde_json::to_string_pretty(&timing).map_err(|e| CliError::Internal(e.into()))?;
    write_file(&dir.join("timing.json"), timing.as_bytes())?;
    for snap in &out.snapshots {
        write_file(&dir.join(format!("buffer-step{:02}.jsonl", snap.step)), &snapshot_jsonl(snap)?)?;
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:+.4}")).unwrap_or_else(|| "n/a".into())
}

fn summary_line(out: &RunOutput) -> String {
    let r = &out.report;
    format!(
        "{} {} seed {}: AP {:.4} BWT {} FWT {} C1 {:.4} C2 {:.4} C3 {}",
        r.method,
        r.order,
        r.seed,
        r.ap,
        fmt_opt(r.bwt),
        fmt_opt(r.fwt),
        r.c1,
        r.c2,
        r.c3.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
    )
}

fn echo_config(dir: &Path, spec: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(spec).map_err(|e| CliError::Internal(e.into()))?;
    write_file(&dir.join("config.json"), text.as_bytes())
}

pub fn run(args: RunArgs) -> CliResult<()> {
    let file = load_run_file(&args.common)?;
    let mut learner = file.learner;
    args.learner.apply(&mut learner);
    learner.validate()?;
    let order = args.order.or(file.order).unwrap_or(OrderKind::Forward);
    let seeds = args.seeds.or(file.seeds).unwrap_or_else(|| vec![learner.seed]);
    if seeds.is_empty() {
        return Err(CliError::usage("at least one seed is required"));
    }
    let bench = load_bench(&args.common.bench)?;
    let dir = args.out.unwrap_or_else(|| out_root().join("runs").join(format!("{}-{}", run_label(&learner), order.name())));
    let spec = RunSpec { bench: args.common.bench.clone(), learner: learner.clone(), order, seeds: seeds.clone() };
    echo_config(&dir, &spec)?;

    let exec = args.learner.exec();
    let outs: Vec<CliResult<RunOutput>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = MethodConfig { seed, ..learner.clone() };
            run_one(&bench, order, &cfg, exec, args.snapshots, &dir.join(format!("seed-{seed}")))
        })
        .collect();
    for out in outs {
        println!("{}", summary_line(&out?));
    }
    println!("results in {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepSpec<'a> {
    bench: &'a Path,
    base: &'a MethodConfig,
    methods: Vec<&'static str>,
    allocators: Vec<&'static str>,
    orders: Vec<&'static str>,
    budgets: &'a [usize],
    seeds: &'a [u64],
}

pub fn sweep(args: SweepArgs) -> CliResult<()> {
    let file = load_run_file(&args.common)?;
    let mut base = file.learner;
    args.learner.apply(&mut base);
    base.validate()?;
    let seeds = args.seeds.clone().or(file.seeds).unwrap_or_else(|| vec![base.seed]);
    let budgets = args.budgets.clone().unwrap_or_else(|| vec![base.budget]);
    if seeds.is_empty() || budgets.is_empty() || args.methods.is_empty() || args.orders.is_empty() || args.allocators.is_empty() {
        return Err(CliError::usage("sweep needs at least one method, allocator, order, budget and seed"));
    }
    let bench = load_bench(&args.common.bench)?;
    let dir = args.out.clone().unwrap_or_else(|| out_root().join("sweep"));
    echo_config(
        &dir,
        &SweepSpec {
            bench: &args.common.bench,
            base: &base,
            methods: args.methods.iter().map(Method::name).collect(),
            allocators: args.allocators.iter().map(Allocator::name).collect(),
            orders: args.orders.iter().map(OrderKind::name).collect(),
            budgets: &budgets,
            seeds: &seeds,
        },
    )?;

    let mut cells = Vec::new();
    for &method in &args.methods {
        let allocators: &[Allocator] = if method.is_scored() { &args.allocators } else { &[Allocator::MinGuar] };
        for &allocator in allocators {
            for &order in &args.orders {
                // budgets only matter to methods with a replay buffer
                let method_budgets: &[usize] = if method.uses_buffer() { &budgets } else { &budgets[..1] };
                for &budget in method_budgets {
                    for &seed in &seeds {
                        let cfg = MethodConfig { method, allocator, budget, seed, ..base.clone() };
                        let sub = dir.join(run_label(&cfg)).join(order.name()).join(format!("B{budget}")).join(format!("seed-{seed}"));
                        cells.push((cfg, order, sub));
                    }
                }
            }
        }
    }
    log::info!("sweep: {} cells", cells.len());
    let exec = args.learner.exec();
    let results: Vec<CliResult<RunOutput>> =
        cells.par_iter().map(|(cfg, order, sub)| run_one(&bench, *order, cfg, exec, false, sub)).collect();
    let mut failed = 0;
    for (r, (_, _, sub)) in results.into_iter().zip(&cells) {
        match r {
            Ok(out) => println!("{}", summary_line(&out)),
            Err(e) => {
                failed += 1;
                eprintln!("error in {}: {e}", sub.display());
            }
        }
    }
    println!("{} runs in {}", cells.len() - failed, dir.display());
    if failed > 0 {
        return Err(CliError::Internal(anyhow::anyhow!("{failed} sweep cells failed")));
    }
    Ok(())
}

pub fn dump_buffer(args: DumpArgs) -> CliResult<()> {
    let file = load_run_file(&args.common)?;
    let mut cfg = file.learner;
    args.learner.apply(&mut cfg);
    cfg.seed = args.seed;
    cfg.validate()?;
    if !cfg.method.uses_buffer() {
        return Err(CliError::usage(format!("method '{}' keeps no replay buffer", cfg.method.name())));
    }
    let order = args.order.or(file.order).unwrap_or(OrderKind::Forward);
    let bench = load_bench(&args.common.bench)?;
    let k = bench.order(order).len();
    if let Some(step) = args.step.filter(|&s| s == 0 || s > k) {
        return Err(CliError::usage(format!("step {step} is outside 1..={k}")));
    }
    let out = aerocl::run_order(&bench, order, &cfg, RunOptions { exec: args.learner.exec(), snapshots: true, audit: false })?;
    let dir = args.out.unwrap_or_else(|| out_root().join("buffer"));
    let mut written = 0;
    for snap in out.snapshots.iter().filter(|s| args.step.is_none_or(|k| k == s.step)) {
        let name = format!("{}-{}-seed{}-step{:02}.jsonl", run_label(&cfg), order.name(), cfg.seed, snap.step);
        write_file(&dir.join(name), &snapshot_jsonl(snap)?)?;
        written += 1;
    }
    println!("wrote {written} buffer snapshot(s) to {}", dir.display());
    Ok(())
}
