//! Splits a screenplay into scenes at its INT./EXT. headings.
//!
//!     cargo run --example segment_screenplay [-- PATH]

use storysum::{Medium, NarrativeDocument};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain/input.txt").into());
    let doc = NarrativeDocument::ingest(&std::fs::read_to_string(&path)?, Medium::Screenplay)?;
    println!("{path}: {} words in {} scenes", doc.word_count(), doc.scenes.len());
    for scene in &doc.scenes {
        let heading: String = scene.heading.as_deref().unwrap_or("(no heading)").chars().take(60).collect();
        println!("{:>3}  {:>5} words  {heading}", scene.index, scene.word_count);
    }
    assert_eq!(doc.reconstruct(), doc.raw_text, "segmentation is lossless");
    Ok(())
}
