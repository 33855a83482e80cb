//! Replays the recorded screenplay chain (preprocess, summarize, compress)
//! without a model server and prints each stage's output.
//!
//!     cargo run --example fixture_replay

use storysum::{run_pipeline, BackendDescriptor, ChunkSize, Medium, NarrativeDocument, PipelineConfig, StageKind};

fn main() -> anyhow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain");
    let config = PipelineConfig::default()
        .with_stages([StageKind::Preprocess, StageKind::Summarize, StageKind::Compress])
        .with_delta(ChunkSize::Unbounded)
        .with_theta(0)
        .with_backend(BackendDescriptor::fixture(format!("{dir}/fixture.json")));
    let config = PipelineConfig { max_iterations: 1, ..config };

    let doc = NarrativeDocument::ingest(&std::fs::read_to_string(format!("{dir}/input.txt"))?, Medium::Screenplay)?;
    let manifest = run_pipeline(&doc, &config)?;
    for r in &manifest.records {
        println!("== {} (iteration {}, {} words)\n{}\n", r.stage, r.iteration, r.output_word_count, r.output_text);
    }
    println!("halt reason: {:?}", manifest.halt_reason);
    Ok(())
}
