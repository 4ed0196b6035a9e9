use thiserror::Error;

/// Errors produced by the filter structures, the time tree and the chain model.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("range [{start},{end}] is not aligned to granularity {granularity}; pass the expand flag to widen it")]
    Unaligned {
        start: u64,
        end: u64,
        granularity: u64,
    },

    #[error("unknown location `{0}`")]
    UnknownLocation(String),

    #[error("malformed state file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
