use thiserror::Error;

/// Errors produced by model construction, data handling, solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("state-action space of size {size} exceeds the dense cap {cap} (set BRL_MAX_STATE_ACTIONS to override)")]
    TooLarge { size: usize, cap: usize },

    #[error("distribution is not fully supported: entry ({state}, {action}) is {value}")]
    NotFullySupported {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("function class is empty{0}")]
    EmptyClass(String),

    #[error("class member {index} leaves [0, {v_max}]: entry {value}")]
    OutOfRange { index: usize, value: f64, v_max: f64 },

    #[error("span coefficients have l1 norm {0} > 1")]
    L1Violation(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
