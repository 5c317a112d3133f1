use thiserror::Error;

/// Errors raised by the optimizer library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("non-finite value in {field} at coordinate {coordinate}")]
    NonFinite { field: &'static str, coordinate: usize },

    #[error("unknown objective `{0}`")]
    UnknownObjective(String),

    #[error("objective evaluation failed: {0}")]
    Evaluation(String),

    #[error("worker failure in process {process}: {reason}")]
    Worker { process: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
