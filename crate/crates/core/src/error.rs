use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Both atoms sit at the same position with the same mark; `R = 0`.
    #[error("degenerate pair: identical position and mark")]
    DegeneratePair,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An iterative numerical method stopped before reaching its tolerance.
    #[error("{what} did not converge (best estimate {estimate:e}, error {error:e})")]
    NonConvergence { what: String, estimate: f64, error: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}
