//! Sweeps the compression chunk size and target length and reports length
//! adherence and compression ratio for each grid point.
//!
//!     cargo run --example length_control_sweep

use storysum::cli::{run_sweep, sweep_table};
use storysum::agents::MockBackend;
use storysum::{BackendDescriptor, ChunkSize, Medium, NarrativeDocument, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let text: String = (0..24)
        .map(|s| {
            let body: Vec<String> = (0..97).map(|w| format!("Line{s}x{w}.")).collect();
            format!("INT. SET {s} - DAY\n{}\n\n", body.join(" "))
        })
        .collect();
    let doc = NarrativeDocument::ingest(&text, Medium::Screenplay)?;
    let base = PipelineConfig::default().with_backend(BackendDescriptor::mock_truncate(0.7));
    let backend = MockBackend::truncate(0.7);
    let deltas = [ChunkSize::Words(100), ChunkSize::Words(300), ChunkSize::Unbounded];
    let thetas = [200, 400, 800];
    let rows = run_sweep(&base, &doc, &backend, &deltas, &thetas, true, None);
    print!("{}", sweep_table(&rows).render());
    Ok(())
}
