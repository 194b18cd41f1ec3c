use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    InvalidData { path: PathBuf, line: usize, message: String },
    #[error("unsupported cloud format for {0} (expected .ply or .xyz)")]
    UnknownFormat(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no consensus set of at least 3 pairs")]
    NoConsensus,
    #[error(transparent)]
    Core(#[from] igasa_core::Error),
}

impl BenchError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
