//! Where in the source a summary draws from: each summary sentence is
//! assigned to the source segment with the best ROUGE-L F1, and histograms
//! are compared with KL divergence.

use serde::{Deserialize, Serialize};

use super::rouge::rouge_l_counts;
use super::{tokenize, MetricError};

pub const DEFAULT_BINS: usize = 10;
pub const KL_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub sentence_index: usize,
    pub bin: usize,
    pub score: f64,
    /// No segment shares a token with the sentence; the bin is the tie
    /// default (0).
    pub zero_score: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationHistogram {
    pub bins: Vec<f64>,
    pub assignments: Vec<Assignment>,
}

impl UtilizationHistogram {
    /// One line per bin: `bin,probability`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,probability\n");
        for (i, p) in self.bins.iter().enumerate() {
            out.push_str(&format!("{i},{p}\n"));
        }
        out
    }
}

/// Splits `words` into `bins` contiguous segments balanced by word count:
/// segment `b` covers `[⌊b·W/bins⌋, ⌊(b+1)·W/bins⌋)`.
fn segment_bounds(total: usize, bins: usize) -> Vec<(usize, usize)> {
    (0..bins)
        .map(|b| (b * total / bins, (b + 1) * total / bins))
        .collect()
}

pub fn document_utilization<S: AsRef<str>>(
    summary_sentences: &[S],
    source: &str,
    bins: usize,
) -> Result<UtilizationHistogram, MetricError> {
    if bins == 0 {
        return Err(MetricError::InvalidParameter("bins must be at least 1".into()));
    }
    if summary_sentences.is_empty() {
        return Err(MetricError::EmptySummary);
    }
    let words: Vec<&str> = source.split_whitespace().collect();
    if words.is_empty() {
        return Err(MetricError::EmptySource);
    }
    let segments: Vec<Vec<String>> = segment_bounds(words.len(), bins)
        .into_iter()
        .map(|(s, e)| tokenize(&words[s..e].join(" ")))
        .collect();

    let mut counts = vec![0u64; bins];
    let mut assignments = Vec::with_capacity(summary_sentences.len());
    for (sentence_index, sentence) in summary_sentences.iter().enumerate() {
        let tokens = tokenize(sentence.as_ref());
        let mut best_bin = 0;
        let mut best: Option<(u64, u64)> = None;
        for (bin, seg) in segments.iter().enumerate() {
            let f1 = rouge_l_counts(&tokens, seg).f1_fraction();
            // Compare fractions exactly; strict > keeps the earliest bin on ties.
            let better = match best {
                None => true,
                Some((bn, bd)) => (f1.0 as u128) * (bd as u128) > (bn as u128) * (f1.1 as u128),
            };
            if better && (best.is_none() || f1.0 > 0) {
                best = Some(f1);
                best_bin = bin;
            }
        }
        let (num, den) = best.unwrap_or((0, 1));
        let score = if den == 0 { 0.0 } else { num as f64 / den as f64 };
        counts[best_bin] += 1;
        assignments.push(Assignment {
            sentence_index,
            bin: best_bin,
            score,
            zero_score: num == 0,
        });
    }
    let total = summary_sentences.len() as f64;
    Ok(UtilizationHistogram {
        bins: counts.iter().map(|&c| c as f64 / total).collect(),
        assignments,
    })
}

fn check_distribution(name: &str, d: &[f64]) -> Result<(), MetricError> {
    if let Some(bad) = d.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(MetricError::NotADistribution(format!("{name} has entry {bad}")));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(MetricError::NotADistribution(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// `Σ pᵢ · ln((pᵢ + ε) / (qᵢ + ε))`: KL(p ‖ q) in nats with additive
/// smoothing. Pass the prediction as `p` and the ground truth as `q`.
pub fn kl_divergence(p: &[f64], q: &[f64], epsilon: f64) -> Result<f64, MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::NotADistribution(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(MetricError::InvalidParameter(format!("epsilon {epsilon}")));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    Ok(p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * ((pi + epsilon) / (qi + epsilon)).ln())
        .sum())
}
