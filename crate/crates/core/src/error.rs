use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid model, contract or run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called outside its contract (off-grid time, wrong
    /// branch, unsupported combination).
    #[error("usage error: {0}")]
    Usage(String),
    /// A formula left its numeric domain (non-positive bond denominator,
    /// zero survival expectation).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    /// The backward solver or one of its regressions failed.
    #[error("solver error: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
