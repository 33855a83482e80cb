//! Which parts of a source a summary draws on: each summary sentence is
//! assigned to the source decile it overlaps most, and two summaries'
//! histograms are compared with KL divergence.
//!
//!     cargo run --example utilization

use storysum::metrics::{document_utilization, kl_divergence, KL_EPSILON};
use storysum::split_sentences;

fn main() -> anyhow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain");
    let source = std::fs::read_to_string(format!("{dir}/preprocessed.txt"))?;
    let sentences = |name: &str| -> anyhow::Result<Vec<String>> {
        let text = std::fs::read_to_string(format!("{dir}/{name}"))?;
        Ok(split_sentences(&text).into_iter().map(|s| s.text).collect())
    };
    let long = document_utilization(&sentences("summary.txt")?, &source, 10)?;
    let short = document_utilization(&sentences("compressed.txt")?, &source, 10)?;
    println!("decile  summary  compressed");
    for (b, (l, s)) in long.bins.iter().zip(&short.bins).enumerate() {
        println!("{b:>6}  {l:>7.3}  {s:>10.3}");
    }
    println!("KL(compressed || summary) = {:.4}", kl_divergence(&short.bins, &long.bins, KL_EPSILON)?);
    Ok(())
}
