use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {d} (at most {max} supported)")]
    UnsupportedDimension { d: usize, max: usize },

    #[error("unsupported kernel order nu = {0}: only half-integer orders have closed forms")]
    UnsupportedOrder(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Cholesky failed for every jitter up to {max_jitter:e}; deduplicate the sample points")]
    NumericalRank { max_jitter: f64 },

    #[error("dual iterate left the barrier domain")]
    OutOfDomain,

    #[error("Newton system is singular after regularization")]
    SingularSystem,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("backtracking failed to find a step inside the barrier domain")]
    BacktrackFailed,

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
