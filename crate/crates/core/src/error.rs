use thiserror::Error;

/// Why a private aggregation refused to produce an output.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbortReason {
    #[error("friendliness test failed: noisy core weight {noisy_weight:.3} below threshold {threshold:.3}")]
    NotFriendly { noisy_weight: f64, threshold: f64 },
    #[error("no diameter on the grid passed the density probe")]
    NoDenseCore,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row {row} has norm {norm}, expected a unit vector")]
    NotUnitRow { row: usize, norm: f64 },
    #[error("aborted: {0}")]
    Aborted(AbortReason),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
