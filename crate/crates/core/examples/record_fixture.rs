//! Regenerates `fixtures/screenplay_chain/fixture.json`.
//!
//! The fixture maps request hashes to the three known outputs of the
//! screenplay chain (preprocessed text, summary, compressed summary). A
//! scripted backend plays those outputs in order while a recorder keys
//! them by the exact requests the pipeline sends.
//!
//!     cargo run --example record_fixture [-- OUTPUT_PATH]

use std::path::{Path, PathBuf};

use storysum::agents::{FixtureRecorder, ScriptedBackend};
use storysum::pipeline::Pipeline;
use storysum::{BackendDescriptor, ChunkSize, Medium, NarrativeDocument, PipelineConfig, StageKind};

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/screenplay_chain");
    let read = |name: &str| std::fs::read_to_string(dir.join(name));
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| dir.join("fixture.json"), PathBuf::from);

    let config = PipelineConfig::default()
        .with_stages([StageKind::Preprocess, StageKind::Summarize, StageKind::Compress])
        .with_delta(ChunkSize::Unbounded)
        .with_theta(0)
        .with_backend(BackendDescriptor::fixture("fixtures/screenplay_chain/fixture.json"));
    let config = PipelineConfig { max_iterations: 1, ..config };

    let doc = NarrativeDocument::ingest(&read("input.txt")?, Medium::Screenplay)?;
    let script = ScriptedBackend::new([read("preprocessed.txt")?, read("summary.txt")?, read("compressed.txt")?]);
    let recorder = FixtureRecorder::new(script);
    let manifest = Pipeline::new(&config, &recorder).run(&doc)?;

    anyhow::ensure!(manifest.final_summary.as_deref() == Some(read("compressed.txt")?.as_str()));
    recorder.save(&out)?;
    println!("wrote {} ({} responses)", out.display(), recorder.recorded().len());
    Ok(())
}
