use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument: shape mismatch, out-of-range parameter, bad axis.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A brute-force routine was asked for more work than its size guard allows.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A non-finite value appeared in an objective or gradient.
    #[error("numerical failure in {block}: {message}")]
    Numerical { block: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(block: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            block: block.into(),
            message: message.into(),
        }
    }
}
