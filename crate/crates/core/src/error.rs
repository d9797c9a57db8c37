use std::path::PathBuf;
use thiserror::Error;

/// Error type shared across the workspace.
#[derive(Debug, Error)]
pub enum AshError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("empty similarity matrix")]
    EmptySimilarity,

    #[error("training error: {0}")]
    Train(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("run error: {0}")]
    Run(String),
}

impl AshError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AshError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AshError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, AshError>;
