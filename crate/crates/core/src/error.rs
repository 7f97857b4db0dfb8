use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read source {source_id}: {cause}")]
    Source {
        source_id: String,
        #[source]
        cause: std::io::Error,
    },

    #[error("io error on {path}: {cause}")]
    Io {
        path: PathBuf,
        #[source]
        cause: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("empty universe")]
    EmptyUniverse,

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("no sources")]
    NoSources,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system")]
    Singular,

    #[error("degenerate labels")]
    DegenerateLabels,

    #[error("no positives")]
    NoPositives,

    #[error("empty sample")]
    EmptySample,

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("divergent loss at epoch {epoch}: {value}")]
    Divergent { epoch: usize, value: f64 },

    #[error("path length {0} exceeds the maximum of 4")]
    PathTooLong(usize),

    #[error("rank {rank} exceeds min(rows, cols) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    #[error("wrong feature scheme: expected {expected}, got {got}")]
    WrongScheme { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}
