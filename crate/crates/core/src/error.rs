use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the thumbnail pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("architecture error: {0}")]
    Arch(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("optimizer error: no gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("format error in {path} at byte {offset}: {msg}")]
    Format { path: PathBuf, offset: u64, msg: String },

    #[error("format error in {path} line {line}: {msg}")]
    TextFormat { path: PathBuf, line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric failure at epoch {epoch}, pair {pair} ({video_id}): {msg}")]
    Numeric {
        epoch: usize,
        pair: usize,
        video_id: String,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
