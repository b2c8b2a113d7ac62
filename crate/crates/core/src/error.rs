//! Crate-wide error type.

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands of a numeric op have incompatible shapes.
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// Invalid or contradictory configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input file does not follow the documented layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// A single row or record could not be parsed.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A metric is not defined for the given input (e.g. a single class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A precomputed embedding is absent for a required line.
    #[error("missing embedding for file `{file_id}` line {line_number}")]
    MissingEmbedding { file_id: String, line_number: u32 },

    /// A non-finite value appeared in a computation.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Checkpoint container is malformed or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Data integrity violation (duplicates, unmatched lines, empty inputs).
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from invalid user input rather than a failure
    /// during processing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::MissingEmbedding { .. }
                | Error::Checkpoint(_)
        ) || matches!(self, Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
