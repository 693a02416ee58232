use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation (e.g. CQI 0).
    #[error("{what} out of range: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A configuration value failed validation. `key` is the dotted path of
    /// the offending entry.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    /// The caller violated a structural precondition (empty cluster, unknown hop, ...).
    #[error("{0}")]
    Structural(String),

    #[error("trace {path}: line {line}: {message}")]
    TraceFormat {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run {cell} failed")]
    Run {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Output(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
