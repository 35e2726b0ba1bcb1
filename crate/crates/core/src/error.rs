use thiserror::Error;

/// Errors raised by the analysis and detection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("sequence too short: need more than {needed} samples, got {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("too few samples: need at least {needed}, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e}); increase the shrinkage")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dataset contains a single class: {0}")]
    SingleClass(String),

    #[error("unknown method: {0}")]
    UnknownMethod(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("target unreachable: {0}")]
    Unreachable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
