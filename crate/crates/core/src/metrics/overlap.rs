//! N-gram overlap between generated and reference texts, used to look for
//! memorized evaluation data.

use std::collections::{BTreeMap, HashSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::tokenize;

/// Generated n-gram instances that occur in the reference, and the total
/// number of generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub matched: u64,
    pub total: u64,
}

impl OverlapCounts {
    pub fn percentage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.matched as f64 / self.total as f64
        }
    }
}

impl std::ops::AddAssign for OverlapCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.matched += rhs.matched;
        self.total += rhs.total;
    }
}

/// Counts every generated n-gram instance (with multiplicity) whose token
/// tuple appears anywhere among the reference's n-grams.
pub fn ngram_overlap_counts(generated: &str, reference: &str, n: usize) -> OverlapCounts {
    let gen = tokenize(generated);
    let reference = tokenize(reference);
    if n == 0 || gen.len() < n {
        return OverlapCounts::default();
    }
    let reference_set: HashSet<&[String]> = if reference.len() >= n {
        reference.windows(n).collect()
    } else {
        HashSet::new()
    };
    let mut counts = OverlapCounts::default();
    for gram in gen.windows(n) {
        counts.total += 1;
        if reference_set.contains(gram) {
            counts.matched += 1;
        }
    }
    counts
}

/// Overlap percentage in `[0, 100]`; zero when `generated` has fewer than
/// `n` tokens.
pub fn ngram_overlap(generated: &str, reference: &str, n: usize) -> f64 {
    ngram_overlap_counts(generated, reference, n).percentage()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    /// Percentage per n.
    pub per_n: BTreeMap<usize, f64>,
    pub counts: BTreeMap<usize, OverlapCounts>,
}

/// Pools counts over all (generated, reference) pairs for each n, so the
/// percentage is over every generated n-gram in the corpus.
pub fn contamination_report<'a, I>(pairs: I, ns: RangeInclusive<usize>) -> ContaminationReport
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
    let mut counts = BTreeMap::new();
    for n in ns {
        let mut pooled = OverlapCounts::default();
        for (g, r) in &pairs {
            pooled += ngram_overlap_counts(g, r, n);
        }
        counts.insert(n, pooled);
    }
    ContaminationReport {
        per_n: counts.iter().map(|(&n, c)| (n, c.percentage())).collect(),
        counts,
    }
}
