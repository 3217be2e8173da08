use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes in clip container")]
    BadMagic,
    #[error("clip dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated clip payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("invalid synthetic spec: {0}")]
    SyntheticSpec(String),
    #[error("invalid prompt template {pattern:?}: {message}")]
    Template { pattern: String, message: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("embedding row {row} has zero norm")]
    DegenerateEmbedding { row: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("ground truth puts mass on ({row}, {col}) where the predicted probability is zero")]
    InfiniteLoss { row: usize, col: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
}

/// Coarse classification used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_)
            | Error::Template { .. }
            | Error::SyntheticSpec(_)
            | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::DegenerateEmbedding { .. } | Error::NonFinite(_) | Error::InfiniteLoss { .. } => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Data,
        }
    }
}
