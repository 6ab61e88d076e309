use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] regret_core::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Core(_) => "synthesis",
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn record(&self) -> Value {
        let mut error = json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            CliError::Io { path, .. } => {
                error["path"] = json!(path.display().to_string());
            }
            CliError::Parse { line, column, .. } => {
                error["line"] = json!(line);
                error["column"] = json!(column);
            }
            CliError::Config { field, .. } => {
                error["field"] = json!(field);
            }
            CliError::Usage(_) | CliError::Core(_) => {}
        }
        json!({ "schema_version": "1", "error": error })
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Parse { .. } | CliError::Config { .. } => 4,
            CliError::Core(_) => 5,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        let (line, column) = (e.line(), e.column());
        let full = e.to_string();
        let message = full
            .strip_suffix(&format!(" at line {line} column {column}"))
            .unwrap_or(&full)
            .to_string();
        CliError::Parse { line, column, message }
    }
}
