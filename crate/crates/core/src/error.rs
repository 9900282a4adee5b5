use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("contract violation: {0}")]
    ContractViolation(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("singular covariance: eigenvalue {eigenvalue:e} below {threshold:e}")]
    SingularCovariance { eigenvalue: f64, threshold: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(&'static str),
}
