use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("SVD failed to converge (matrix {rows}x{cols}, max |entry| {max_abs:e})")]
    SvdFailed {
        rows: usize,
        cols: usize,
        max_abs: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    /// Carries the last accepted state.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, state: Vec<f64>, reason: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
