use alloc::string::String;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A dataset violates its role schema (missing column, bad roles, ...).
    #[error("schema error: {0}")]
    Schema(String),
    /// A cell could not be interpreted.
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    /// An argument is outside of the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A numerical routine could not produce a usable result.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for errors caused by the inputs (as opposed to numerical failure).
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
