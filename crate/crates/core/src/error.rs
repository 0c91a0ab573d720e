use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerics error at iteration {iteration}: {detail}")]
    Numerics { iteration: usize, detail: String },

    #[error("state error: {0}")]
    State(String),

    #[error("config error in `{field}`: {detail}")]
    Config { field: String, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by a bad run configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
