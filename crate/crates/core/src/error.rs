use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward called on a loss that does not depend on any trainable leaf")]
    Detached,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature map {h}x{w} exceeds the distance-matrix cap of {cap} pixels; reduce the feature size")]
    TooLarge { h: usize, w: usize, cap: usize },

    #[error("topology check failed: {0}")]
    Topology(String),

    #[error("{path}: malformed file at byte {pos}: {msg}")]
    Format { path: PathBuf, pos: usize, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
