use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("training diverged: non-finite value in `{param}`{context}")]
    Diverged { param: String, context: String },

    #[error("finite-difference oracle failed: f is not finite at coordinate {coordinate}")]
    Oracle { coordinate: usize },

    #[error("ingestion of {path}: {message}")]
    Ingestion { path: PathBuf, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn diverged(param: impl Into<String>) -> Self {
        Error::Diverged {
            param: param.into(),
            context: String::new(),
        }
    }

    /// Attach epoch/batch position to a divergence error; other variants pass through.
    pub fn with_position(self, position: impl std::fmt::Display) -> Self {
        match self {
            Error::Diverged { param, .. } => Error::Diverged {
                param,
                context: format!(" at {position}"),
            },
            other => other,
        }
    }
}
