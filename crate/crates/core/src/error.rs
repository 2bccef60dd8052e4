use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument falls outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A remote endpoint could not be reached after all retry attempts.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// A remote endpoint answered but the reply violates the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("template error: missing slot [{0}]")]
    MissingSlot(String),

    /// The generator produced output that cannot be used as an utterance.
    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the surrounding infrastructure rather than of the
    /// agents' behaviour.
    pub fn is_infrastructure(&self) -> bool {
        matches!(
            self,
            Error::Transport { .. } | Error::Protocol(_) | Error::Io(_)
        )
    }
}
