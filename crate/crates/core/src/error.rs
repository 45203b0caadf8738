use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GsvdError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix is not symmetric (max asymmetry {asym:e} relative to {scale:e})")]
    NotSymmetric { asym: f64, scale: f64 },

    #[error("n = {n} exceeds the dense size limit {limit}; use the iterative (lsqr) mode or a desk-scale problem")]
    DenseLimit { n: usize, limit: usize },

    #[error("vector must be nonzero: {0}")]
    ZeroVector(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, GsvdError>;

impl GsvdError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GsvdError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GsvdError::Io {
            path: path.into(),
            source,
        }
    }
}
