//! Model-facing layer: prompt templates, backends and stage executors.

mod backend;
mod http;
mod stage;
pub mod template;

pub use backend::{
    truncate_words, Backend, BackendDescriptor, BackendError, BackendKind, CompletionRequest,
    FixtureBackend, FixtureRecorder, GenerationParams, MockBackend, RetryPolicy, ScriptedBackend,
};
pub use http::HttpBackend;
pub use stage::{run_reflection, run_reflection_with, run_stage, StageConfig, StageError, StageGroup, StageKind, StageOutput};
pub use template::{Message, PromptTemplate, Role, TemplateError};
