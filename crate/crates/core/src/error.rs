use thiserror::Error;

/// Errors raised by the numerical kernels, builders and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max asymmetry {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("commutant draw had coincident eigenvalues across sectors after {attempts} attempts")]
    DegenerateDraw { attempts: usize },

    #[error("operator leaks across sector blocks (cross-block mass {residual:e})")]
    BlockLeakage { residual: f64 },

    #[error("operator is zero")]
    ZeroOperator,

    #[error("data point {index} does not lie in a single sector ray")]
    SectorResolutionFailure { index: usize },

    #[error("non-finite loss at epoch {epoch}: {value}")]
    NonFiniteLoss { epoch: usize, value: f64 },

    #[error("dimension {dim} exceeds the dense commutant solver limit of {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
