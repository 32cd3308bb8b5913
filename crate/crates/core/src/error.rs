use thiserror::Error;

/// Axis of the operational area, used to report out-of-bounds coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => f.write_str("x"),
            Axis::Y => f.write_str("y"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {value} lies outside the operational area along the {axis} axis")]
    OutOfArea { axis: Axis, value: f64 },

    #[error("label {label} is not a valid cell (class count {classes})")]
    InvalidLabel { label: usize, classes: usize },

    #[error("shape mismatch: expected dimension {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("mixed batch has no current-mission samples")]
    EmptyBatch,

    #[error("evaluation set is empty")]
    EmptySet,

    #[error("{0} is undefined for fewer than two missions")]
    Undefined(&'static str),

    #[error("class {0} has no satellite samples")]
    MissingClass(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported benchmark version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
