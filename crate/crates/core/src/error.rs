use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time {time} is not aligned with the grid step {step}")]
    Alignment { time: f64, step: f64 },

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An OU value or state left the representable range; the path is unusable.
    #[error("numeric range exceeded at t = {time}: {detail}")]
    NumericRange { time: f64, detail: String },

    #[error("unsupported matrix structure: {0}")]
    Unsupported(String),

    #[error("cannot compare trajectories: {0}")]
    Comparison(String),
}

pub type Result<T> = std::result::Result<T, SyncError>;
