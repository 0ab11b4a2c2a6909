//! Empirical Gaussianity checks on the errors `h_t` entering the denoiser.

use crate::algorithms::RunTrace;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianityError {
    #[error("trace holds no per-iteration errors; run with keep_errors")]
    NoErrors,
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub iteration: usize,
    pub samples: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov–Smirnov distance to `N(0,1)` after standardization.
    pub ks_statistic: f64,
}

impl Moments {
    /// Rejects normality at level `alpha` (asymptotic KS critical value).
    pub fn ks_rejects(&self, alpha: f64) -> bool {
        self.ks_statistic > ks_critical_value(self.samples, alpha)
    }
}

/// `sqrt(-ln(α/2)/2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Centers and scales `h` to zero mean and unit variance.
pub fn standardize(h: &[f64]) -> Vec<f64> {
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    h.iter().map(|v| (v - mean) / sd).collect()
}

/// Moments of samples that are already standardized.
pub fn moments_of_standardized(z: &[f64], iteration: usize) -> Result<Moments, GaussianityError> {
    if z.len() < 4 {
        return Err(GaussianityError::TooFewSamples(z.len()));
    }
    let n = z.len() as f64;
    let (m2, m3, m4) = z.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &v| {
        let v2 = v * v;
        (a + v2, b + v2 * v, c + v2 * v2)
    });
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks = sorted.iter().enumerate().fold(0.0f64, |d, (i, &v)| {
        let f = normal_cdf(v);
        d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs())
    });
    Ok(Moments {
        iteration,
        samples: z.len(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        ks_statistic: ks,
    })
}

pub fn moments(h: &[f64], iteration: usize) -> Result<Moments, GaussianityError> {
    moments_of_standardized(&standardize(h), iteration)
}

/// Per-iteration diagnostics for one run.
pub fn gaussianity_report(trace: &RunTrace) -> Result<Vec<Moments>, GaussianityError> {
    if trace.errors.is_empty() {
        return Err(GaussianityError::NoErrors);
    }
    trace.errors.iter().enumerate().map(|(t, h)| moments(h, t)).collect()
}

/// Pools trials: each trial's `h_t` is standardized on its own, then the
/// samples are concatenated per iteration. Iterations missing from any
/// trial are dropped.
pub fn pooled_report(traces: &[RunTrace]) -> Result<Vec<Moments>, GaussianityError> {
    let depth = traces.iter().map(|t| t.errors.len()).min().unwrap_or(0);
    if depth == 0 {
        return Err(GaussianityError::NoErrors);
    }
    (0..depth)
        .map(|t| {
            let pooled: Vec<f64> = traces.iter().flat_map(|tr| standardize(&tr.errors[t])).collect();
            moments_of_standardized(&pooled, t)
        })
        .collect()
}
