use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("at least two workers are required, got {0}")]
    TooFewWorkers(usize),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("power fraction beta for worker {worker} must lie in [0, 1), got {value}")]
    InvalidBeta { worker: usize, value: f64 },

    #[error("expected {expected} per-worker entries for {name}, got {found}")]
    WorkerCountMismatch {
        name: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("worker index {index} out of range for {n} workers")]
    WorkerIndex { index: usize, n: usize },

    #[error("total noise variance at the receiver is zero, no privacy is possible")]
    ZeroNoise,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("worker {0} has an empty dataset")]
    EmptyDataset(usize),

    #[error("cannot split {samples} samples across {workers} workers")]
    NotEnoughSamples { samples: usize, workers: usize },

    #[error("averaging rate eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),

    #[error("parameter server unavailable in round {0}")]
    ServerOutage(usize),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}
