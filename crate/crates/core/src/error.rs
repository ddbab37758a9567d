//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the requested operation.
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: &'static str, details: String },

    /// A numeric computation failed (non-convergence, non-finite values).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An API was driven through an invalid state transition.
    #[error("state error: {0}")]
    State(String),

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid argument or configuration value.
    #[error("invalid input: {0}")]
    Input(String),

    /// A dataset file failed validation on load.
    #[error("load error for video '{video_id}' at byte offset {offset}: {details}")]
    Load {
        video_id: String,
        offset: u64,
        details: String,
    },

    /// A correlation coefficient is undefined for the given inputs.
    #[error("undefined coefficient: {0}")]
    UndefinedCoefficient(String),

    #[error("I/O error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::Shape {
            op,
            details: details.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
