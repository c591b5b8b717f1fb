use thiserror::Error;

/// Errors raised by estimation, metrics, simulators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid slate configuration: {0}")]
    InvalidConfig(String),

    #[error("slate has {got} slots, configuration expects {expected}")]
    SlotCountMismatch { expected: usize, got: usize },

    #[error("action {action} in slot {slot} is out of range (N = {num_actions})")]
    ActionOutOfRange {
        slot: usize,
        action: usize,
        num_actions: usize,
    },

    #[error("context {context} is out of range ({num_contexts} contexts)")]
    ContextOutOfRange { context: usize, num_contexts: usize },

    #[error("enumeration of {size} slates exceeds the guard of {limit}")]
    EnumerationTooLarge { size: f64, limit: u64 },

    #[error(
        "support violation: logging policy gives zero probability to action {action} \
         in slot {slot} for context {context}"
    )]
    SupportViolation {
        context: usize,
        slot: usize,
        action: usize,
    },

    #[error("reward {reward} lies outside the declared range [{min}, {max}]")]
    RewardOutOfRange { reward: f64, min: f64, max: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grids differ (sizes {left} and {right}); resample one onto the other")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid probability distribution: {0}")]
    InvalidPolicy(String),

    #[error("invalid CDF: {0}")]
    InvalidCdf(String),

    #[error("total mass {mass} is below the requested level {alpha}")]
    InsufficientMass { mass: f64, alpha: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
