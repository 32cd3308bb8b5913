//! Continual visual geo-localization across drone missions under a fixed
//! memory budget, with a synthetic benchmark to exercise it.

pub mod error;
pub mod grid;
pub mod lifelong;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod par;
pub mod sample;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Coordinate, GridMap};
pub use lifelong::{run_order, run_sequence, Method, MethodConfig, RunOptions, RunOutput};
pub use par::Exec;
pub use sample::{Sample, Split};
pub use synth::{generate, BenchConfig, Benchmark, OrderKind};
