//! Crate-wide error types.

use thiserror::Error;

/// Top-level error for corpus loading, training, and pipeline runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate email id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid window: {0}")]
    Window(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("infeasible generator config: {0}")]
    Infeasible(String),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Per-line diagnostic produced while loading a corpus file. Unlike
/// [`Error::DuplicateId`], these are not fatal: the offending record is
/// skipped and loading continues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Signal that a URL cannot yield a registered domain; callers skip the URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum UrlError {
    #[error("url could not be parsed")]
    Unparseable,
    #[error("url has no host")]
    NoHost,
}
