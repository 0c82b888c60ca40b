use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero vector")]
    Normalization,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("degenerate landmark configuration: {0}")]
    DegenerateLandmarks(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unexpected image shape {width}x{height}x{channels}, expected 224x224x3")]
    Shape {
        width: u32,
        height: u32,
        channels: u8,
    },

    #[error("failed to load encoder backend: {0}")]
    BackendLoad(String),

    #[error("at least two identities are required, found {0}")]
    InsufficientClasses(usize),

    #[error("malformed prompt template {0:?}: expected exactly one `{{}}` placeholder")]
    Template(String),

    #[error("non-finite value encountered in {0}")]
    Numerics(&'static str),

    #[error("schedule step {step} outside 0..={total}")]
    Schedule { step: usize, total: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("malformed {kind} file {}: {reason}", path.display())]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(
        kind: &'static str,
        path: impl Into<PathBuf>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Format {
            kind,
            path: path.into(),
            reason: reason.into(),
        }
    }
}
