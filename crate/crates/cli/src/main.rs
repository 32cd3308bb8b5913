//! `aerocl` command-line runner.

mod compare;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Output root used when a command is not given an explicit destination.
pub const OUT_ENV: &str = "AEROCL_OUT";

#[derive(Parser, Debug)]
#[command(name = "aerocl", version, about = "Mission-based continual place recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic benchmark file.
    Generate {
        /// Benchmark config (JSON); defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file [default: $AEROCL_OUT/bench-seed<SEED>.jsonl]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one method over one curriculum for each seed.
    Run(run::RunArgs),
    /// Run every method x order x budget cell in parallel.
    Sweep(run::SweepArgs),
    /// Aggregate metrics files under a directory into tables.
    Compare {
        /// Directory searched recursively for metrics.json files.
        dir: PathBuf,
        /// Where to write compare.csv and traces.csv [default: DIR]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export buffer contents with embeddings as JSON Lines.
    DumpBuffer(run::DumpArgs),
}

/// Output root: `$AEROCL_OUT`, else `./aerocl-out`.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("aerocl-out"))
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Benchmark file written by `generate`.
    #[arg(long)]
    pub bench: PathBuf,
    /// Run config (JSON); command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, seed, out } => run::generate(config.as_deref(), seed, out),
        Command::Run(args) => run::run(args),
        Command::Sweep(args) => run::sweep(args),
        Command::Compare { dir, out } => compare::compare(&dir, out.as_deref()),
        Command::DumpBuffer(args) => run::dump_buffer(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}
