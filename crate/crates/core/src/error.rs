use std::io;

use thiserror::Error;

use crate::indexes::IndexKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("write failed: {0}")]
    Write(String),

    #[error("read failed: {0}")]
    Read(String),

    #[error("cannot build index: {0}")]
    Build(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("trace does not match {kind}: {reason}")]
    TraceMismatch { kind: IndexKind, reason: String },

    #[error("incomparable workload: {0}")]
    Incomparable(String),

    #[error("empty selectivity group {0}")]
    EmptyGroup(String),

    #[error("malformed {what} at line {line}: {reason}")]
    Format {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            line,
            reason: reason.into(),
        }
    }
}
