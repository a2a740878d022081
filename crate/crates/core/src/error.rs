use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// The inputs are valid but fall outside the cases this crate solves.
    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// A configured size cap was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Factorization, integration or optimization broke down.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Malformed text input; `row` is 1-based and counts the header.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Short machine-friendly tag, used in benchmark failure rows.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Unsupported(_) => "unsupported",
            Error::Resource(_) => "resource",
            Error::Numeric(_) => "numeric",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
