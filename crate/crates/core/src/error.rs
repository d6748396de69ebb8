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

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    /// Malformed content in one of the on-disk formats. `row` is the
    /// one-based data row (header excluded) when the problem is row-local.
    #[error("{file}{}: {message}", row.map(|r| format!(" row {r}")).unwrap_or_default())]
    Format {
        file: String,
        row: Option<usize>,
        message: String,
    },

    #[error("{file} row {row}: non-finite value")]
    NonFinite { file: String, row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("t-SNE diverged at iteration {iteration}")]
    ProjectionDiverged { iteration: usize },
}

impl Error {
    pub(crate) fn format(file: &str, row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.to_string(),
            row,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn dims(message: impl Into<String>) -> Self {
        Error::DimensionMismatch(message.into())
    }

    /// True for errors caused by bad caller input (flags, arguments,
    /// selections) rather than by I/O or numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::UnknownClass(_) | Error::DimensionMismatch(_)
        )
    }
}
