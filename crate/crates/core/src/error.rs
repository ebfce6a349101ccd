use thiserror::Error;

/// Errors produced by configuration checks, signal generation and the detectors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("delay {delay} outside 0..={max_delay}")]
    DelayOutOfRange { delay: usize, max_delay: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative gamma entry {value} at device {device}, delay {delay}")]
    NegativeGamma { device: usize, delay: usize, value: f64 },

    /// Cholesky failed or a quadratic form that must be positive was not.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("no convergence within {sweeps} sweeps (last decrease {last_decrease:e})")]
    NotConverged { sweeps: usize, last_decrease: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("malformed matrix file: {0}")]
    MatrixFormat(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
