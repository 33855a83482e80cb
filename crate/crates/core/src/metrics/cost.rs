//! Token-cost model for the three-stage pipeline.
//!
//! Stage `i` encodes its input in chunks of `cᵢ` tokens and decodes a
//! fraction `aᵢ` of it. Everything is carried as exact rationals; the
//! `f64` views exist for display.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Input tokens.
    pub n: u64,
    /// Chunk sizes c1..c3.
    pub c: [u64; 3],
    /// Compression ratios a1..a3, each in (0, 1].
    pub a: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCost {
    pub encoded: BigRational,
    pub decoded: BigRational,
}

impl StageCost {
    pub fn total(&self) -> BigRational {
        &self.encoded + &self.decoded
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostEstimate {
    pub stages: [StageCost; 3],
    pub total: BigRational,
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl CostEstimate {
    pub fn total_f64(&self) -> f64 {
        to_f64(&self.total)
    }

    /// `(encoded, decoded)` per stage as floats.
    pub fn stages_f64(&self) -> [(f64, f64); 3] {
        self.stages
            .clone()
            .map(|s| (to_f64(&s.encoded), to_f64(&s.decoded)))
    }

    /// `n·[c1(1+a1) + a1·c2(1+a2) + a1·a2·c3(1+a3)]`, evaluated independently
    /// of the per-stage terms.
    pub fn closed_form(params: &CostParams) -> Result<BigRational, MetricError> {
        let (n, c, a) = exact(params)?;
        let one = BigRational::one();
        let bracket = &c[0] * (&one + &a[0])
            + &a[0] * &c[1] * (&one + &a[1])
            + &a[0] * &a[1] * &c[2] * (&one + &a[2]);
        Ok(n * bracket)
    }

    pub fn to_json(&self, params: &CostParams) -> serde_json::Value {
        let stages: Vec<_> = self
            .stages_f64()
            .iter()
            .enumerate()
            .map(|(i, (e, d))| {
                serde_json::json!({ "stage": i + 1, "encoded_tokens": e, "decoded_tokens": d })
            })
            .collect();
        serde_json::json!({
            "n": params.n,
            "c": params.c,
            "a": params.a,
            "stages": stages,
            "total": self.total_f64(),
            "total_exact": self.total.to_string(),
        })
    }
}

type Exact = (BigRational, [BigRational; 3], [BigRational; 3]);

fn exact(params: &CostParams) -> Result<Exact, MetricError> {
    if params.n == 0 {
        return Err(MetricError::InvalidParameter("n must be positive".into()));
    }
    if let Some(i) = params.c.iter().position(|&c| c == 0) {
        return Err(MetricError::InvalidParameter(format!("c{} must be positive", i + 1)));
    }
    let mut a = Vec::with_capacity(3);
    for (i, &ai) in params.a.iter().enumerate() {
        if !(ai > 0.0 && ai <= 1.0) {
            return Err(MetricError::InvalidRatio(format!("a{} = {ai} is outside (0, 1]", i + 1)));
        }
        a.push(BigRational::from_float(ai).expect("finite"));
    }
    let int = |v: u64| BigRational::from_integer(BigInt::from(v));
    Ok((
        int(params.n),
        params.c.map(int),
        a.try_into().expect("three ratios"),
    ))
}

pub fn estimate_cost(params: &CostParams) -> Result<CostEstimate, MetricError> {
    let (n, c, a) = exact(params)?;
    // Input volume reaching each stage: n, a1·n, a1·a2·n.
    let inputs = [n.clone(), &a[0] * &n, &a[0] * &a[1] * &n];
    let stages: [StageCost; 3] = std::array::from_fn(|i| {
        let encoded = &inputs[i] * &c[i];
        let decoded = &encoded * &a[i];
        StageCost { encoded, decoded }
    });
    let total = stages.iter().fold(BigRational::zero(), |acc, s| acc + s.total());
    Ok(CostEstimate { stages, total })
}
