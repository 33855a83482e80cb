//! Token cost of the three stages, computed with exact rationals, for a
//! few compression ratios.
//!
//!     cargo run --example cost_model

use storysum::metrics::{estimate_cost, CostParams};

fn main() -> anyhow::Result<()> {
    let n = 100_000;
    let c = [8_000, 4_000, 300];
    for a in [[0.5, 0.5, 0.5], [0.3, 0.6, 0.8], [1.0, 1.0, 1.0]] {
        let est = estimate_cost(&CostParams { n, c, a })?;
        let stages: Vec<String> = est.stages_f64().iter().map(|(e, d)| format!("{:.3e}", e + d)).collect();
        println!("a = {a:?}: stages [{}], total {:.4e}", stages.join(", "), est.total_f64());
    }
    Ok(())
}
