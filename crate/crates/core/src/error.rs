use thiserror::Error;

/// Errors raised by grid construction, basis enumeration, assembly,
/// the eigensolvers and the order checkers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: u128, cap: usize },

    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),

    #[error("order relation violated: entry ({row}, {col}) = {value:e}")]
    OrderViolation { row: usize, col: usize, value: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("basis does not match grid: expected {expected} modes, basis has {found}")]
    BasisMismatch { expected: usize, found: usize },

    #[error("Lanczos did not converge in {iterations} iterations (best e0 = {e0}, residual = {residual:e})")]
    NoConvergence { iterations: usize, e0: f64, residual: f64 },

    #[error("degenerate ground state (gap {gap:e} <= 10 x residual {residual:e}), positivity undefined")]
    Degenerate { gap: f64, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
