use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has no support points")]
    EmptySupport,
    #[error("weight at index {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to zero")]
    ZeroTotalWeight,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}")]
    NonFiniteValue { row: usize },
    #[error("operation requires {required}-dimensional measures, got dimension {found}")]
    DimensionError { required: usize, found: usize },
    #[error("source atom {row} has zero weight; drop zero-weight atoms before solving")]
    ZeroRowWeight { row: usize },
    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("instance has {entries} plan entries, above the cap of {cap}")]
    InstanceTooLarge { entries: usize, cap: usize },
    #[error("marginals are not valid probability vectors of equal mass: {0}")]
    DegenerateMarginals(String),
    #[error("kernel underflow at epsilon = {epsilon}; use log-domain iterations")]
    NumericalUnderflow { epsilon: f64 },
    #[error("measure stream exhausted after {available} measures ({required} required)")]
    StreamExhausted { available: usize, required: usize },
    #[error("invalid step schedule: {0}")]
    InvalidScheduleParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("image has zero total intensity")]
    AllZeroImage,
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
