use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LarReport {
    pub generated_len: u64,
    pub target_len: u64,
    pub lar: f64,
}

impl LarReport {
    pub fn new(generated_len: u64, target_len: u64) -> Result<Self, MetricError> {
        Ok(Self {
            generated_len,
            target_len,
            lar: lar(generated_len, target_len)?,
        })
    }
}

/// Length adherence rate: `1 − |generated − target| / target`.
///
/// Computed as `(target − |generated − target|) / target` over integers so
/// the only rounding is the final division. Never above 1; negative once
/// the summary is more than twice the target.
pub fn lar(generated_len: u64, target_len: u64) -> Result<f64, MetricError> {
    if target_len == 0 {
        return Err(MetricError::ZeroTarget);
    }
    let gap = generated_len.abs_diff(target_len) as i128;
    let target = target_len as i128;
    Ok((target - gap) as f64 / target as f64)
}

/// `1 − after / before`.
pub fn compression_ratio(before_words: f64, after_words: f64) -> Result<f64, MetricError> {
    if !(before_words > 0.0 && before_words.is_finite()) {
        return Err(MetricError::ZeroBefore);
    }
    if !(after_words >= 0.0 && after_words.is_finite()) {
        return Err(MetricError::InvalidParameter(format!(
            "length after compression must be non-negative, got {after_words}"
        )));
    }
    Ok(1.0 - after_words / before_words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lar_examples() {
        assert_eq!(lar(900, 900).unwrap(), 1.0);
        assert!((lar(891, 900).unwrap() - 0.99).abs() < 1e-12);
        assert!((lar(670, 600).unwrap() - (1.0 - 70.0 / 600.0)).abs() < 1e-12);
        assert_eq!(lar(0, 100).unwrap(), 0.0);
        assert_eq!(lar(300, 100).unwrap(), -1.0);
        assert_eq!(lar(5, 0), Err(MetricError::ZeroTarget));
    }

    #[test]
    fn compression_examples() {
        assert!((compression_ratio(9675.41, 4069.24).unwrap() - 0.5794).abs() < 5e-5);
        assert_eq!(compression_ratio(42.0, 42.0).unwrap(), 0.0);
        assert_eq!(compression_ratio(100.0, 0.0).unwrap(), 1.0);
        assert_eq!(compression_ratio(0.0, 1.0), Err(MetricError::ZeroBefore));
        assert!(compression_ratio(10.0, -1.0).is_err());
    }
}
