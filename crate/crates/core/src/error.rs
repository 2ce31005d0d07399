use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is below 1e-12, cannot normalize")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("invalid descriptor at row {row}: {reason}")]
    InvalidDescriptor { row: usize, reason: String },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("ground truth has no positive pairs")]
    EmptyGroundTruth,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target {id:?}: {source}")]
    Target {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// `true` for I/O and file-format failures, `false` for validation failures.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::Format(_) | Error::Json(_) => true,
            Error::Target { source, .. } | Error::Context { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
