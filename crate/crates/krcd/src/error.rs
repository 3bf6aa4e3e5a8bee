use thiserror::Error;

/// Errors produced by kernel construction, estimation, and the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched or malformed arguments (dimension mismatches, empty inputs).
    #[error("argument error: {0}")]
    Argument(String),

    /// A configuration that violates a structural precondition (e.g. P >= N).
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite or otherwise unusable input data.
    #[error("input error: {0}")]
    Input(String),

    /// A linear solve failed even after jitter escalation.
    #[error("numeric error: {message} (condition estimate {condition_estimate:.3e})")]
    Numeric {
        message: String,
        condition_estimate: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
