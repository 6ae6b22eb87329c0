use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dictionary is empty")]
    EmptyDictionary,

    /// A cached projection is longer than the dictionary it is applied to.
    #[error("projection of length {projection} exceeds dictionary size {dictionary}")]
    ProjectionOutOfRange {
        projection: usize,
        dictionary: usize,
    },

    #[error("gram matrix is not invertible")]
    SingularGram,

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(
        "experiment {experiment}, device {device}, block {block} (seed {seed:#018x}): {source}"
    )]
    Experiment {
        experiment: usize,
        device: usize,
        block: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
