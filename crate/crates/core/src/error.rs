use std::path::PathBuf;

use thiserror::Error;

use crate::protocol::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    /// Every live beam had all of its next tokens masked.
    #[error("beam search starved at step {step}: every continuation is banned")]
    Starvation { step: usize },

    #[error("ingestion failed:\n{}", .problems.join("\n"))]
    Ingest { problems: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for failures that originate in the inference backend or the
    /// transport to it, as opposed to bad local input.
    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend(_))
    }
}
