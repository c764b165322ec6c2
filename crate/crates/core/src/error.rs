use thiserror::Error;

use crate::solver::RunTrace;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A non-finite value appeared in the iterates. The partial trace holds
    /// every record completed before the failing step.
    #[error("divergence at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        partial: Box<RunTrace>,
    },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
