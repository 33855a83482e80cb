//! A run interrupted by a backend failure is resumed from its persisted
//! manifest; completed stages are replayed instead of called again.
//!
//!     cargo run --example resume_run

use std::sync::atomic::{AtomicUsize, Ordering};

use storysum::agents::{Backend, BackendError, CompletionRequest, MockBackend};
use storysum::pipeline::{load_manifest, Pipeline};
use storysum::{BackendDescriptor, ChunkSize, Medium, NarrativeDocument, PipelineConfig};

/// Halves its input but refuses every call after the first `budget`.
struct Flaky {
    inner: MockBackend,
    calls: AtomicUsize,
    budget: usize,
}

impl Backend for Flaky {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.budget {
            return Err(BackendError::Transport { attempts: 1, message: "server went away".into() });
        }
        self.inner.complete(request)
    }
}

fn main() -> anyhow::Result<()> {
    let text: String = (0..16)
        .map(|s| format!("INT. HALL {s} - DAY\n{}\n\n", (0..60).map(|w| format!("Act{s}x{w}.")).collect::<Vec<_>>().join(" ")))
        .collect();
    let doc = NarrativeDocument::ingest(&text, Medium::Screenplay)?;
    let config = PipelineConfig::default()
        .with_backend(BackendDescriptor::mock_halve())
        .with_delta(ChunkSize::Words(100))
        .with_theta(100);
    let dir = std::env::temp_dir().join(format!("storysum-resume-{}", std::process::id()));
    let path = dir.join("manifest.json");

    let flaky = Flaky { inner: MockBackend::halve(), calls: AtomicUsize::new(0), budget: 3 };
    let err = Pipeline::new(&config, &flaky).persist_to(&path).run(&doc).unwrap_err();
    let partial = load_manifest(&path)?;
    println!("first attempt failed: {}", err.error);
    println!("persisted {} completed stage records", partial.records.len());

    let healthy = Flaky { inner: MockBackend::halve(), calls: AtomicUsize::new(0), budget: usize::MAX };
    let done = Pipeline::new(&config, &healthy).persist_to(&path).resume(partial, &doc)?;
    println!(
        "resumed run {}: {} words, {} new calls of {} total",
        done.run_id,
        done.final_word_count().unwrap_or(0),
        healthy.calls.load(Ordering::SeqCst),
        done.totals.calls
    );
    std::fs::remove_dir_all(dir)?;
    Ok(())
}
