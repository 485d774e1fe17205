use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped so the command-line front end can map them onto its
/// exit-code contract: [`MlrError::is_data_error`] covers malformed input,
/// [`MlrError::is_numerical`] covers solver and certificate breakdowns.
#[derive(Debug, Error)]
pub enum MlrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("label {label} at row {row} is out of range for k = {k}")]
    LabelOutOfRange { row: usize, label: usize, k: usize },

    #[error("degenerate mixture model: {0}")]
    DegenerateModel(String),

    #[error("direction undefined: {0}")]
    UndefinedDirection(String),

    #[error("measurement {row} is orthogonal to its class direction; certificate undefined")]
    OrthogonalPoint { row: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MlrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MlrError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MlrError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MlrError::Numerical(_) | MlrError::OrthogonalPoint { .. }
        )
    }

    pub fn is_data_error(&self) -> bool {
        !self.is_numerical()
    }
}

pub type Result<T> = std::result::Result<T, MlrError>;
