#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use storysum::agents::{Backend, BackendError, CompletionRequest};
use storysum::{BackendDescriptor, ChunkSize, Medium, NarrativeDocument, PipelineConfig, StageKind};

pub const CHAIN_FIXTURE: &str = "fixtures/screenplay_chain/fixture.json";

pub fn chain_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/screenplay_chain")
}

pub fn read_chain(name: &str) -> String {
    std::fs::read_to_string(chain_dir().join(name)).unwrap()
}

/// P over the eight-scene input as one chunk, S over the re-segmented
/// result, then a single compression pass with no length bound.
pub fn chain_config() -> PipelineConfig {
    let c = PipelineConfig::default()
        .with_stages([StageKind::Preprocess, StageKind::Summarize, StageKind::Compress])
        .with_delta(ChunkSize::Unbounded)
        .with_theta(0)
        .with_backend(BackendDescriptor::fixture(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(CHAIN_FIXTURE)));
    PipelineConfig { max_iterations: 1, ..c }
}

pub fn chain_doc() -> NarrativeDocument {
    NarrativeDocument::ingest(&read_chain("input.txt"), Medium::Screenplay).unwrap()
}

/// `n` one-word sentences, `W0. W1. ...`.
pub fn one_word_sentences(n: usize) -> String {
    (0..n).map(|i| format!("W{i}.")).collect::<Vec<_>>().join(" ")
}

/// `scenes` screenplay scenes of exactly `words` words each (heading
/// included; `words >= 4`).
pub fn screenplay(scenes: usize, words: usize) -> String {
    (0..scenes)
        .map(|s| format!("INT. ROOM{s} DAY\n{}", (0..words - 3).map(|w| format!("S{s}w{w}.")).collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Delegates to `inner` for the first `limit` calls, then fails.
pub struct FailAfter<B> {
    pub inner: B,
    pub calls: AtomicUsize,
    pub limit: usize,
}

impl<B> FailAfter<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self { inner, calls: AtomicUsize::new(0), limit }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: Backend> Backend for FailAfter<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(BackendError::Transport { attempts: 3, message: "connection reset".into() });
        }
        self.inner.complete(request)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}
