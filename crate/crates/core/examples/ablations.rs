//! Runs each stage subset (zero-shot through the full pipeline) on the same
//! document and compares their length and call counts.
//!
//!     cargo run --example ablations

use storysum::metrics::report::Table;
use storysum::pipeline::Ablation;
use storysum::{run_pipeline, BackendDescriptor, Medium, NarrativeDocument, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let text: String = (0..16)
        .map(|s| {
            let body: Vec<String> = (0..147).map(|w| format!("Event{s}x{w}.")).collect();
            format!("EXT. FIELD {s} - NIGHT\n{}\n\n", body.join(" "))
        })
        .collect();
    let doc = NarrativeDocument::ingest(&text, Medium::Screenplay)?;
    let base = PipelineConfig::default().with_backend(BackendDescriptor::mock_halve()).with_theta(300);

    let mut table = Table::new(["variant", "final_words", "calls", "halt_reason"]);
    for ablation in Ablation::ALL {
        let m = run_pipeline(&doc, &ablation.apply(&base))?;
        table.push([
            ablation.label().to_string(),
            m.final_word_count().unwrap_or(0).to_string(),
            m.totals.calls.to_string(),
            m.halt_reason.map_or("-".into(), |h| h.to_string()),
        ]);
    }
    println!("input: {} words", doc.word_count());
    print!("{}", table.render());
    Ok(())
}
