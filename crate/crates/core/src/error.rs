use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the retrieval toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular matrix: {0}")]
    Singularity(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: objective {value}")]
    Divergence { epoch: usize, batch: usize, value: f64 },

    #[error("similarity undefined for a zero-norm vector")]
    UndefinedSimilarity,

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad numerics rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singularity(_) | Error::Numerical(_) | Error::Divergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
