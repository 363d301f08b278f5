use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {height}x{width}, need at least {min}x{min}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: line {line}: timestamp {t} does not increase")]
    Order { path: String, line: usize, t: f64 },

    #[error("sync error: {0}")]
    Sync(String),

    #[error("time {t} s is before the first sample at {first} s")]
    Range { t: f64, first: f64 },

    #[error("non-uniform input at sample {index}: spacing {spacing} s, expected {expected} s")]
    NonUniformInput {
        index: usize,
        spacing: f64,
        expected: f64,
    },

    #[error("simulation diverged at step {step} (t = {t} s)")]
    Divergence { step: usize, t: f64 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
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
