use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Provider,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("insufficient {side} pool: {required} required, {available} available")]
    Capacity {
        side: &'static str,
        required: usize,
        available: usize,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("provider error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Provider { status: Option<u16>, message: String },

    #[error("protocol error in `{field}`: {message}")]
    Protocol { field: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("item {index} ({id}): {source}")]
    Item {
        index: usize,
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn provider(message: impl Into<String>) -> Self {
        Error::Provider {
            status: None,
            message: message.into(),
        }
    }

    pub(crate) fn protocol(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Protocol {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_) => ErrorClass::Config,
            Error::Provider { .. } | Error::Protocol { .. } | Error::Validation(_) => {
                ErrorClass::Provider
            }
            Error::Item { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
