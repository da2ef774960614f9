//! Crate-wide error type.
//!
//! Every fallible operation in the pipeline returns [`PipelineError`]. Errors
//! are classified so the CLI can map them onto exit codes: I/O problems
//! (missing files, unreadable paths) are distinguished from validation
//! problems (bad schemas, violated invariants, bad configuration).

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Raw corpus line could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// JSONL record violated the declared schema.
    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },

    /// Data passed structural parsing but violated a dataset invariant.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Bad configuration value or unknown key.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/operator shape or domain violation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Annotation rule precondition failed.
    #[error("annotation error: {0}")]
    Annotation(String),

    /// A pipeline stage is missing an artifact a previous stage produces.
    #[error("missing artifact {artifact}: run `{producer}` first")]
    MissingArtifact { artifact: String, producer: String },

    /// An input file does not match the hash recorded in its manifest.
    #[error("manifest mismatch for {path}: file was modified after it was produced")]
    ManifestMismatch { path: PathBuf },

    /// Numerical failure during training (non-finite loss).
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the environment (missing/unreadable files)
    /// rather than by invalid data or configuration.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            PipelineError::Io { .. } | PipelineError::MissingArtifact { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
