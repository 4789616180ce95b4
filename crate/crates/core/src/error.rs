use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("resource limit exceeded: {what} needs dimension {dim}, cap is {cap}")]
    Resource { what: String, dim: usize, cap: usize },

    #[error("eigensolver failed on block {block}: {reason}")]
    Numeric { block: String, reason: String },

    #[error("time step too coarse at t = {t}: overlap {overlap:.4} on site {site} (need > {threshold})")]
    StepSize {
        t: f64,
        site: usize,
        overlap: f64,
        threshold: f64,
    },

    #[error("sample {index} failed twice: {reason}")]
    SampleFailed { index: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
