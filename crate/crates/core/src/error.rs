use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TdlError>;

#[derive(Debug, Error)]
pub enum TdlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("environment misuse: {0}")]
    EnvMisuse(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("good region is numerically empty: {0}")]
    DegenerateRegion(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TdlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TdlError::Io {
            path: path.into(),
            source,
        }
    }
}
