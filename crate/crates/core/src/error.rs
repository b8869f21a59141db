use thiserror::Error;

/// Errors raised by the operator algebra and everything built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator is not Hermitian (max |X - X^dag| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |U U^dag - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("state vector is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("not a density operator: {0}")]
    NotAState(String),

    #[error("conservation law violated: residual {residual:e} exceeds {tol:e}")]
    ConservationViolated { residual: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
