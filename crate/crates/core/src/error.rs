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

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("noise ratio {0} requested but the train split has no negatives")]
    NoNegatives(f64),

    // Embedding table load errors.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("embedding dimension must be positive, got {0}")]
    BadDimension(i64),
    #[error("truncated embedding row for {kind} {id}: expected {expected} values, found {found}")]
    TruncatedRow {
        kind: &'static str,
        id: u64,
        expected: usize,
        found: usize,
    },
    #[error("duplicate embedding row for {kind} {id}")]
    DuplicateRow { kind: &'static str, id: u64 },
    #[error("non-finite embedding component for {kind} {id}")]
    NonFiniteEmbedding { kind: &'static str, id: u64 },
    #[error("missing embeddings with fallback disabled: {0}")]
    MissingEmbeddings(String),

    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("positive sample ({user}, {item}) has no similarity entry")]
    MissingSimilarity { user: u64, item: u64 },

    #[error("{which} id {id} out of range (size {size})")]
    IdOutOfRange {
        which: &'static str,
        id: usize,
        size: usize,
    },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("config: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
