//! Preprocess → summarize → compress → reflect, with a persisted manifest.

mod config;
mod controller;
mod manifest;
mod resume;

use std::path::PathBuf;

use thiserror::Error;

use crate::agents::{BackendError, StageError, StageKind};
use crate::chunker::ChunkError;
use crate::corpus::CorpusError;

pub use config::{Ablation, PipelineConfig, Preset};
pub use controller::{
    iterative_compress, run_pipeline, CompressionOutcome, CompressionSettings, HaltDecision, Pipeline,
};
pub use manifest::{
    load_manifest, persist_manifest, DocumentInfo, HaltReason, RunManifest, RunStatus, StageRecord, Totals,
    SCHEMA_VERSION,
};
pub use resume::{check_resumable, resume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(#[from] CorpusError),
    #[error("chunking: {0}")]
    Chunk(#[from] ChunkError),
    #[error("stage {stage} (iteration {iteration}): {source}")]
    Stage {
        stage: StageKind,
        iteration: usize,
        #[source]
        source: StageError,
    },
    #[error("stage {stage} produced no text")]
    EmptyOutput { stage: StageKind },
    #[error("backend: {0}")]
    Backend(BackendError),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("manifest schema version {found} is not {expected}")]
    SchemaMismatch { expected: u32, found: String },
    #[error("{what} changed since the manifest was written (recorded {recorded}, now {current})")]
    ConfigDrift {
        what: &'static str,
        recorded: String,
        current: String,
    },
}

impl PipelineError {
    /// The backend error behind this failure, if any.
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            PipelineError::Backend(e) => Some(e),
            PipelineError::Stage { source, .. } => source.backend_error(),
            _ => None,
        }
    }
}

/// A failed run, with the manifest as far as it got when the run had
/// started.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunError {
    pub error: PipelineError,
    pub manifest: Option<Box<RunManifest>>,
}

impl From<PipelineError> for RunError {
    fn from(error: PipelineError) -> Self {
        Self { error, manifest: None }
    }
}
