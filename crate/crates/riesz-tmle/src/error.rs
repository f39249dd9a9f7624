use std::io;

use serde_json::json;

/// Errors surfaced by the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on `{path}`: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Core(#[from] riesz_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// `2` for configuration and data problems, `3` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_input_error() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(riesz_core::Error::Schema(_)) => "schema",
            CliError::Core(riesz_core::Error::Parse { .. }) => "parse",
            CliError::Core(riesz_core::Error::Argument(_)) => "argument",
            CliError::Core(riesz_core::Error::Numerical(_)) => "numerical",
        }
    }

    /// Machine-readable error document.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
