//! ROUGE-N with clipped counts and ROUGE-L via longest common subsequence.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Integer ingredients of a ROUGE score. Keeping them around lets callers
/// compare results exactly instead of through floating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RougeCounts {
    pub overlap: u64,
    pub candidate_total: u64,
    pub reference_total: u64,
}

impl RougeCounts {
    /// F1 as an unreduced fraction `2·overlap / (candidate + reference)`.
    pub fn f1_fraction(&self) -> (u64, u64) {
        (2 * self.overlap, self.candidate_total + self.reference_total)
    }

    pub fn score(&self) -> Score {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let (f_num, f_den) = self.f1_fraction();
        Score {
            precision: ratio(self.overlap, self.candidate_total),
            recall: ratio(self.overlap, self.reference_total),
            f1: ratio(f_num, f_den),
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

pub fn rouge_n_counts<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeCounts {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    RougeCounts {
        overlap,
        candidate_total: cand.values().sum(),
        reference_total: refs.values().sum(),
    }
}

/// ROUGE-N. `n = 0` has no n-grams and scores zero.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Score {
    rouge_n_counts(candidate, reference, n).score()
}

/// Length of the longest common subsequence, two-row dynamic programme.
fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> u64 {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0u64; b.len() + 1];
    let mut cur = vec![0u64; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_counts<T: Eq>(candidate: &[T], reference: &[T]) -> RougeCounts {
    RougeCounts {
        overlap: lcs_len(candidate, reference),
        candidate_total: candidate.len() as u64,
        reference_total: reference.len() as u64,
    }
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Score {
    rouge_l_counts(candidate, reference).score()
}

/// Geometric mean of ROUGE-1/2/L F1; zero if any component is zero.
pub fn geometric_mean(r1: f64, r2: f64, rl: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 || rl <= 0.0 {
        return 0.0;
    }
    (r1 * r2 * rl).cbrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge_1: Score,
    pub rouge_2: Score,
    pub rouge_l: Score,
    pub geometric_mean: f64,
}

impl RougeReport {
    /// Tokenizes both texts and scores ROUGE-1, ROUGE-2 and ROUGE-L.
    pub fn compute(candidate: &str, reference: &str) -> Self {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        let rouge_1 = rouge_n(&c, &r, 1);
        let rouge_2 = rouge_n(&c, &r, 2);
        let rouge_l = rouge_l(&c, &r);
        Self {
            rouge_1,
            rouge_2,
            rouge_l,
            geometric_mean: geometric_mean(rouge_1.f1, rouge_2.f1, rouge_l.f1),
        }
    }
}
