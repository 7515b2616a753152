use std::path::PathBuf;

use crate::decoder::DecodeReport;

/// Errors produced anywhere in the detection, training and fixture pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image dimensions: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("rectangle out of bounds: {0}")]
    Bounds(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no bands detected")]
    NoBands(Box<DecodeReport>),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("split `{split}` has no qualifying images{detail}")]
    EmptySplit { split: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
