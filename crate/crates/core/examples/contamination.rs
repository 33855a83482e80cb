//! Percentage of generated n-grams (n = 4..8) that also occur in a
//! reference text, pooled over several document pairs.
//!
//!     cargo run --example contamination

use storysum::metrics::contamination_report;

fn main() {
    let pairs = [
        (
            "the detective finds the letter hidden under the floorboards of the old house",
            "hidden under the floorboards of the old house lay a letter nobody had read",
        ),
        ("a storm forces the crew to land on an unmapped island", "the crew sails north for the winter"),
    ];
    let report = contamination_report(pairs.iter().map(|&(g, r)| (g, r)), 4..=8);
    for (n, pct) in &report.per_n {
        let c = report.counts[n];
        println!("n={n}: {}/{} generated n-grams found ({pct:.2}%)", c.matched, c.total);
    }
}
