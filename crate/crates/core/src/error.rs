use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("raster has {actual} values, geometry requires {expected}")]
    ValueCount { expected: usize, actual: usize },

    #[error("raster geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("unmapped source code {code} at cell {cell}")]
    UnmappedCode { code: String, cell: usize },

    #[error("invalid land class: {0}")]
    InvalidClass(String),

    #[error("invalid conversion code {0}, expected 1..=9")]
    InvalidConversionCode(u8),

    #[error("degenerate value range: {0}")]
    DegenerateRange(String),

    #[error("insufficient variance: {0}")]
    InsufficientVariance(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("undefined expansion rate: previous urban count is zero")]
    UndefinedRate,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("feature arity mismatch: expected {expected}, got {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("empty training data")]
    EmptyData,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("forest format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
