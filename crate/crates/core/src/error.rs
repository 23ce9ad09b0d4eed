use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Schema or content problem in an input file; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "Cholesky factorization failed (matrix not positive definite even with jitter {jitter:e})"
    )]
    NotPositiveDefinite { jitter: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("negative predictive variance {0:e}")]
    NegativeVariance(f64),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from the model rather than from the data or files.
    pub fn is_model_failure(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonFinite(_)
                | Error::NegativeVariance(_)
                | Error::Optimization(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
