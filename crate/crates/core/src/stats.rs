//! Monte Carlo summary statistics.

use serde::{Deserialize, Serialize};

/// Sample summary. `variance` and `stderr` are `None` for a single sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub variance: Option<f64>,
    pub stderr: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    /// Two-pass mean and unbiased variance, accumulated in slice order so the
    /// result does not depend on how the values were produced.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n > 0, "summary of an empty sample");
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            ss / (n - 1) as f64
        });
        SummaryStats {
            n,
            mean,
            variance,
            stderr: variance.map(|var| (var / n as f64).sqrt()),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `|mean − target| ≤ k · stderr`; false when the stderr is undefined.
    pub fn within(&self, target: f64, k: f64) -> bool {
        self.stderr.is_some_and(|se| (self.mean - target).abs() <= k * se)
    }
}
