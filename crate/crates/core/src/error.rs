use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the environment, network, trainer and evaluation code.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid maps, configs or network shapes.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse, e.g. stepping a finished episode.
    #[error("usage error: {0}")]
    Usage(String),

    /// Numerical failure during training (non-finite loss or gradients).
    #[error("training error: {0}")]
    Training(String),

    /// Checkpoint could not be read or does not match the expected network.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The message without the category prefix, where there is one.
    pub fn message(&self) -> String {
        match self {
            Error::Config(m) | Error::Usage(m) | Error::Training(m) | Error::Checkpoint(m) => m.clone(),
            other => other.to_string(),
        }
    }
}
