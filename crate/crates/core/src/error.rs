use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the texture pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed image: {0}")]
    Format(String),
    #[error("invalid volume manifest: {0}")]
    Manifest(String),
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid intensity window [{low}, {high}]")]
    Window { low: i32, high: i32 },
    #[error("invalid filter spec: {0}")]
    Spec(String),
    #[error("value {value} out of range for {levels} gray levels")]
    Range { value: u32, levels: u32 },
    #[error("degenerate histogram: {0}")]
    Histogram(String),
    #[error("invalid threshold vector: {0}")]
    Threshold(String),
    #[error("search space of {combinations} combinations exceeds budget {budget}")]
    Budget { combinations: u128, budget: u128 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("co-occurrence matrix has no pairs")]
    EmptyGlcm,
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("label {0} is not a valid class")]
    Label(usize),
    #[error("undefined metric: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
