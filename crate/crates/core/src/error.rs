use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("no events")]
    NoEvents,
    #[error("split degenerate: {0} events, need at least 10")]
    DegenerateSplit(usize),
    #[error("invalid generator config: {0}")]
    InvalidGenConfig(String),
    #[error("query {0} has no planted truth")]
    NoTruth(usize),
    #[error("dimension mismatch in {block}: expected {expected}, found {found}")]
    DimensionMismatch {
        block: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("NaN encountered in {0}")]
    NaN(&'static str),
    #[error("prior rate must lie strictly inside (0, 1), got {0}")]
    DegeneratePrior(f64),
    #[error("average precision needs both classes")]
    SingleClass,
    #[error("no eligible queries for explanation scoring")]
    NoEligibleQueries,
    #[error("non-finite loss at batch example {index}: {detail}")]
    NonFiniteLoss { index: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: u32, found: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
