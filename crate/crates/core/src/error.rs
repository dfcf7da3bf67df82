use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation (bad index, mismatched dimensions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or topology failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed configuration text.
    #[error("parse error: {0}")]
    Parse(String),

    /// The integrator produced a state that violates the density-matrix invariants.
    #[error("integration failure at grid step {step} (t = {time:.6}): {reason}")]
    Integration { step: usize, time: f64, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
