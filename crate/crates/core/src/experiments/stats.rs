use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::preferences::rng;

/// Mean and sample standard deviation. Empty input gives `(NaN, NaN)`, a
/// single sample gives a standard deviation of 0.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn binomial_se(rate: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (rate * (1.0 - rate) / n as f64).sqrt()
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(samples: &[f64], iterations: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("bootstrap needs >= 2 samples, got {}", samples.len())));
    }
    if iterations == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("iterations {iterations}, level {level}")));
    }
    let n = samples.len();
    let mut rng = rng::stream(&[seed, 0xB007]);
    let mut means: Vec<f64> = (0..iterations)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| {
        let idx = (q * (iterations - 1) as f64).round() as usize;
        means[idx.min(iterations - 1)]
    };
    Ok((at(tail), at(1.0 - tail)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub statistic: f64,
    /// Non-tied pairs used.
    pub n: usize,
    pub z: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
}

pub const WILCOXON_MIN_PAIRS: usize = 6;

/// Signed-rank test on paired samples. Zero differences are dropped, tied
/// magnitudes share their average rank and the variance is tie-corrected.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    let mut diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate("every pair is tied".into()));
    }
    if diffs.len() < WILCOXON_MIN_PAIRS {
        return Err(Error::InsufficientData(format!(
            "signed-rank test needs >= {WILCOXON_MIN_PAIRS} non-tied pairs, got {}",
            diffs.len()
        )));
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = diffs.len();
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        w_plus += diffs[i..=j].iter().filter(|d| **d > 0.0).count() as f64 * rank;
        i = j + 1;
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let z = (w_plus - mean) / var.sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0);
    Ok(WilcoxonResult { statistic: w_plus, n, z, p_value })
}

pub const BONFERRONI_ALPHA: f64 = 0.01;

/// Per-test significance after Bonferroni correction at family level `alpha`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len().max(1) as f64;
    let alpha = if p_values.len() >= 2 { alpha / m } else { alpha };
    p_values.iter().map(|&p| p < alpha).collect()
}
