use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or index mismatch between cooperating structures.
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was called before its precondition held.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid target spec at `{path}`: {message}")]
    Spec { path: String, message: String },

    #[error("execution failed: {0}")]
    Execution(String),

    #[error("adapter protocol error: {0}")]
    Protocol(String),

    #[error("snapshot rejected: {0}")]
    Snapshot(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
