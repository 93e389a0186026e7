use thiserror::Error;

/// Errors raised anywhere in the fusion library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two fields that must share a grid do not.
    #[error("grid mismatch: expected {expected:?}, found {found:?}")]
    Dimension { expected: (usize, usize), found: (usize, usize) },

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// No pixel qualified for evaluation.
    #[error("empty report: {0}")]
    EmptyReport(String),

    /// Malformed file contents.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse { offset, message: msg.into() }
    }
}
