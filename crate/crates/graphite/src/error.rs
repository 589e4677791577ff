//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes for an operation.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A forward operation produced NaN or Inf.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// An API contract was violated (e.g. backward on a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A graph failed a structural invariant.
    #[error("invalid graph {id}: {reason}")]
    InvalidGraph { id: usize, reason: String },

    /// Treatment id outside the catalog range 1..=n.
    #[error("treatment id {id} out of range (catalog has {count} treatments)")]
    TreatmentOutOfRange { id: usize, count: usize },

    /// The model family cannot express the requested prediction.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// Training aborted by a numeric error at a known step.
    #[error("numeric failure at epoch {epoch}, step {step}: {source}")]
    TrainingAborted {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed input file; location is "row N, field F" where known.
    #[error("schema error in {file} ({location}): {reason}")]
    Schema {
        file: String,
        location: String,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        file: impl Into<String>,
        location: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Schema {
            file: file.into(),
            location: location.into(),
            reason: reason.into(),
        }
    }
}
