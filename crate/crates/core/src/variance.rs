//! Phantom speedups: what a benchmark reports when "slow" and "fast" are the
//! same program.
//!
//! Each pair is two measurements of one `(program, input)`; the ratio
//! `first / second` should be exactly 1. A deterministic backend gives a
//! degenerate report. A noisy one inflates the mean and grows a fat upper
//! tail, because for two i.i.d. `LogNormal(0, σ)` samples the ratio is
//! `LogNormal(0, σ√2)` with mean `exp(σ²)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perf::{BackendDescriptor, MeasureRequest, MeasurementError, PerfBackend};

pub const REPORTED_QUANTILES: [f64; 3] = [0.5, 0.95, 0.99];

/// Largest σ [`calibrate_noise`] will search.
const MAX_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub mean_ratio: f64,
    pub std_ratio: f64,
    /// Keyed by probability as written in [`REPORTED_QUANTILES`].
    pub quantiles: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_pairs: usize,
    /// Pairs dropped because a measurement failed.
    pub n_failed: usize,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub quantiles: BTreeMap<String, f64>,
    pub backend: BackendDescriptor,
    /// Same statistics for `second / first`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<RatioStats>,
}

#[derive(Debug, Error)]
pub enum VarianceError {
    #[error("need at least one pair")]
    NoPairs,
    #[error("every pair failed; last error: {0}")]
    AllFailed(MeasurementError),
    #[error("target mean ratio {0} is unattainable (must be >= 1 and <= exp({MAX_SIGMA}^2))")]
    Unattainable(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sample standard deviation (n − 1) and reported quantiles.
pub fn ratio_stats(ratios: &[f64]) -> RatioStats {
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let std = if ratios.len() > 1 {
        (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = REPORTED_QUANTILES
        .iter()
        .map(|p| (p.to_string(), quantile(&sorted, *p)))
        .collect();
    RatioStats {
        mean_ratio: mean,
        std_ratio: std,
        quantiles,
    }
}

/// Outcome of an audit: the report plus the raw `first / second` ratios.
#[derive(Debug, Clone)]
pub struct Audit {
    pub report: AuditReport,
    pub ratios: Vec<f64>,
}

impl Audit {
    /// One ratio per line under a `pair,ratio` header.
    pub fn ratios_csv(&self) -> String {
        let mut out = String::from("pair,ratio\n");
        for (i, r) in self.ratios.iter().enumerate() {
            let _ = writeln!(out, "{i},{r}");
        }
        out
    }
}

/// Measures the same program twice per pair, `n_pairs` times.
pub fn audit_identical_pairs(
    backend: &dyn PerfBackend,
    request: &MeasureRequest<'_>,
    n_pairs: usize,
    both_directions: bool,
) -> Result<Audit, VarianceError> {
    if n_pairs == 0 {
        return Err(VarianceError::NoPairs);
    }
    let mut ratios = Vec::with_capacity(n_pairs);
    let mut failed = 0;
    let mut last_err = None;
    for _ in 0..n_pairs {
        let first = backend.measure(request);
        let second = backend.measure(request);
        match (first, second) {
            (Ok(a), Ok(b)) if a.unit() == b.unit() => ratios.push(a.value() / b.value()),
            (Err(e), _) | (_, Err(e)) => {
                failed += 1;
                last_err = Some(e);
            }
            (Ok(_), Ok(_)) => failed += 1,
        }
    }
    if ratios.is_empty() {
        return Err(VarianceError::AllFailed(last_err.unwrap_or(MeasurementError::MissingArtifact)));
    }
    let stats = ratio_stats(&ratios);
    let inverse = both_directions.then(|| {
        let inv: Vec<f64> = ratios.iter().map(|r| 1.0 / r).collect();
        ratio_stats(&inv)
    });
    Ok(Audit {
        report: AuditReport {
            n_pairs: ratios.len(),
            n_failed: failed,
            mean_ratio: stats.mean_ratio,
            std_ratio: stats.std_ratio,
            quantiles: stats.quantiles,
            backend: backend.descriptor(),
            inverse,
        },
        ratios,
    })
}

/// Finds σ such that the ratio of two i.i.d. `LogNormal(0, σ)` samples has
/// mean `target_mean_ratio`, i.e. `exp(σ²) = target`, by bisection.
pub fn calibrate_noise(target_mean_ratio: f64, tolerance: f64) -> Result<f64, VarianceError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(VarianceError::BadTolerance(tolerance));
    }
    let mean_ratio = |sigma: f64| (sigma * sigma).exp();
    if !target_mean_ratio.is_finite()
        || target_mean_ratio < 1.0
        || target_mean_ratio > mean_ratio(MAX_SIGMA)
    {
        return Err(VarianceError::Unattainable(target_mean_ratio));
    }
    let (mut lo, mut hi) = (0.0_f64, MAX_SIGMA);
    if (mean_ratio(lo) - target_mean_ratio).abs() <= tolerance {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let err = mean_ratio(mid) - target_mean_ratio;
        if err.abs() <= tolerance {
            return Ok(mid);
        }
        if err < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
