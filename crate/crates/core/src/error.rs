use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("step size underflow at t = {t}: h = {h:.3e}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("state is not in the S^2 = 0 sector (triplet component mismatch {deviation:.3e})")]
    NotSinglet { deviation: f64 },

    #[error("many-body basis dimension {dim} exceeds cap {cap}")]
    BasisTooLarge { dim: usize, cap: usize },

    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
