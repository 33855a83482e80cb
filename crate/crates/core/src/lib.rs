//! Hierarchical multi-agent summarization of long-form narratives.
//!
//! The crate is organized the way a run flows:
//!
//! * [`corpus`] turns raw text into scenes, sentences and word counts.
//! * [`chunker`] groups scenes (preprocessing and summarization) and
//!   sentences (compression) into the units sent to each model call.
//! * [`agents`] holds prompt templates, the model backends (HTTP, mocks,
//!   fixture replay) and the stage executors.
//! * [`pipeline`] drives preprocess → summarize → compress → reflect, owns
//!   the length-controlled compression loop and the persisted run manifest.
//! * [`metrics`] implements the evaluation instruments: length adherence,
//!   compression ratio, ROUGE, n-gram contamination, document utilization
//!   with KL divergence, and the token-cost model.
//! * [`cli`] is the command-line front end used by the `storysum` binary.

pub mod agents;
pub mod chunker;
pub mod cli;
pub mod corpus;
pub mod metrics;
pub mod pipeline;

mod hashing;

pub use agents::{
    Backend, BackendDescriptor, BackendError, BackendKind, GenerationParams, PromptTemplate,
    StageConfig, StageKind,
};
pub use chunker::{chunk_by_scenes, chunk_by_sentences, ChunkSize, SceneChunk, SentenceChunk};
pub use corpus::{split_sentences, word_count, Medium, NarrativeDocument, Scene, Sentence};
pub use pipeline::{run_pipeline, HaltReason, PipelineConfig, Preset, RunManifest};
