//! Evaluation instruments.
//!
//! All text-based metrics share [`tokenize`]: lowercase, every run of
//! non-alphanumeric characters acts as a separator.

mod cost;
mod length;
mod overlap;
pub mod report;
mod rouge;
mod utilization;

use thiserror::Error;

pub use cost::{estimate_cost, CostEstimate, CostParams, StageCost};
pub use length::{compression_ratio, lar, LarReport};
pub use overlap::{contamination_report, ngram_overlap, ngram_overlap_counts, ContaminationReport, OverlapCounts};
pub use rouge::{geometric_mean, rouge_l, rouge_l_counts, rouge_n, rouge_n_counts, RougeCounts, RougeReport, Score};
pub use utilization::{
    document_utilization, kl_divergence, Assignment, UtilizationHistogram, DEFAULT_BINS, KL_EPSILON,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("target length must be at least 1")]
    ZeroTarget,
    #[error("length before compression must be positive")]
    ZeroBefore,
    #[error("summary has no sentences")]
    EmptySummary,
    #[error("source text is empty")]
    EmptySource,
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("invalid compression ratio: {0}")]
    InvalidRatio(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Metric tokenizer: lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
