//! The length-controlled compression loop on its own: compress until the
//! next pass would drop below the target length, then keep the last
//! iterate at or above it.
//!
//!     cargo run --example iterative_compression

use storysum::agents::{GenerationParams, MockBackend, StageConfig};
use storysum::pipeline::{iterative_compress, CompressionSettings};
use storysum::{word_count, ChunkSize, StageKind};

fn main() -> anyhow::Result<()> {
    let text: String = (0..1200).map(|i| format!("Beat{i} happens.")).collect::<Vec<_>>().join(" ");
    let settings = CompressionSettings {
        delta: ChunkSize::Words(300),
        theta: 500,
        max_iterations: 10,
        early_stop_on_stall: true,
    };
    let backend = MockBackend::truncate(0.6);
    let outcome = iterative_compress(
        &text,
        &settings,
        &StageConfig::new(StageKind::Compress),
        &backend,
        &GenerationParams::default(),
    )?;
    println!("input: {} words, theta {}", word_count(&text), settings.theta);
    for (i, it) in outcome.iterates.iter().enumerate() {
        println!("iteration {}: {} words", i + 1, word_count(&it.output_text));
    }
    println!(
        "kept {} words after {} iterations ({})",
        word_count(&outcome.final_summary),
        outcome.iterations_used,
        outcome.halt_reason
    );
    Ok(())
}
