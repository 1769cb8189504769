use thiserror::Error;

/// Errors produced by grid, norm, solver and harness operations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("shell index {j} outside partition range [{j_min}, {j_max}]")]
    ShellOutOfRange { j: i32, j_min: i32, j_max: i32 },

    #[error("grid too coarse: partition hosts only {shells} dyadic shells (need at least {min})")]
    TooFewShells { shells: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solver halted at t = {t} (step {step}): {reason}")]
    SolverHalt { t: f64, step: u64, reason: String },

    #[error("regression rejected: {0}")]
    FitRejected(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("snapshot format: {0}")]
    SnapshotFormat(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
