//! The two chunkers: fixed groups of scenes for preprocessing and
//! summarization, and greedy sentence packing under a word budget for
//! compression.
//!
//!     cargo run --example chunking

use storysum::{chunk_by_scenes, chunk_by_sentences, ChunkSize, Medium, NarrativeDocument};

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain/input.txt"))?;
    let doc = NarrativeDocument::ingest(&text, Medium::Screenplay)?;

    for per in [1, 3, 8] {
        let chunks = chunk_by_scenes(&doc, per)?;
        let sizes: Vec<usize> = chunks.iter().map(|c| c.word_count).collect();
        println!("{per} scenes per chunk -> {} chunks, words {sizes:?}", chunks.len());
    }

    let summary = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain/summary.txt"))?;
    for delta in [ChunkSize::Words(40), ChunkSize::Words(100), ChunkSize::Unbounded] {
        let chunks = chunk_by_sentences(&summary, delta);
        let sizes: Vec<usize> = chunks.iter().map(|c| c.word_count).collect();
        println!("delta {delta} -> {} chunks, words {sizes:?}", chunks.len());
    }
    Ok(())
}
