//! ROUGE-1, ROUGE-2, ROUGE-L and their geometric mean for the recorded
//! compressed summary against the longer summary it came from.
//!
//!     cargo run --example rouge [-- GENERATED REFERENCE]

use storysum::metrics::RougeReport;

fn main() -> anyhow::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/screenplay_chain");
    let mut args = std::env::args().skip(1);
    let generated = args.next().unwrap_or_else(|| format!("{dir}/compressed.txt"));
    let reference = args.next().unwrap_or_else(|| format!("{dir}/summary.txt"));
    let r = RougeReport::compute(&std::fs::read_to_string(generated)?, &std::fs::read_to_string(reference)?);
    for (name, s) in [("ROUGE-1", r.rouge_1), ("ROUGE-2", r.rouge_2), ("ROUGE-L", r.rouge_l)] {
        println!("{name}  P {:.4}  R {:.4}  F1 {:.4}", s.precision, s.recall, s.f1);
    }
    println!("geometric mean of F1: {:.4}", r.geometric_mean);
    Ok(())
}
