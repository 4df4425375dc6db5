use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::Position;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at {position}: {message}")]
    Parse { position: Position, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] mftbohm_core::Error),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
