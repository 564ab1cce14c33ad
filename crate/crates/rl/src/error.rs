use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RlError>;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("insufficient experience: {available} transitions stored, batch needs {batch}")]
    InsufficientExperience { available: usize, batch: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("invalid action bounds for dimension {dim}: lo = {lo}, hi = {hi}")]
    Bounds { dim: usize, lo: f64, hi: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
