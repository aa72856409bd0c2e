use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed EMB1/LAB1/PRB1 payload or manifest.
    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    /// Input cannot support the requested fit (e.g. fewer than two distinct values).
    #[error("{0}")]
    Degenerate(String),

    #[error("{0}")]
    Generation(String),

    #[error("{0}")]
    InvalidParameter(String),

    #[error("{0}")]
    EmptySelection(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Validation(_) => "validation",
            Error::Dimension(_) => "dimension",
            Error::ZeroNorm { .. } => "zero-norm",
            Error::Degenerate(_) => "degenerate",
            Error::Generation(_) => "generation",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::EmptySelection(_) => "empty-selection",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
