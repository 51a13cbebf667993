use std::path::PathBuf;

use thiserror::Error;

use crate::harness::checkpoint::Checkpoint;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("image size {size} must be >= 16 and divisible by {stride}")]
    BadSize { size: usize, stride: usize },
    #[error("invalid box: {0}")]
    BadBox(String),
    #[error("ground-truth mask has no foreground pixel")]
    EmptyMask,
    #[error("ground truth must be binary, found {0}")]
    BadMask(f64),
    #[error("sample `{id}` has no counterpart in {dir}/")]
    MissingPair { id: String, dir: String },
    #[error("{channels} channels cannot be split into {k} segments")]
    BadSegments { channels: usize, k: usize },
    #[error("guided-filter radius {radius} too large for a {size}x{size} map")]
    BadRadius { radius: usize, size: usize },
    #[error("batch mismatch: {0}")]
    BadBatch(String),
    #[error("configuration error: {0}")]
    BadConfig(String),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    FailedRun { epoch: usize, last_good: Box<Checkpoint> },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Metric(#[from] dsam_metrics::MetricError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::BadShape(msg.into())
    }
}
