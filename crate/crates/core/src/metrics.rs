//! Scoring optimized candidates against the original program.
//!
//! * `speedup(o, n) = o / n`.
//! * The per-example speedup is clamped to 1.0 when the chosen candidate is
//!   incorrect or slower than the original.
//! * An example counts as *optimized* when its best candidate is correct and
//!   at least 10% faster: `(o - n) / o >= 0.10`.
//! * Best@k picks the fastest correct candidate among the first `k` samples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::Judgement;
use crate::perf::{PerfError, PerfMeasurement};

/// Default %Opt threshold on relative improvement (inclusive).
pub const DEFAULT_OPT_MIN_IMPROVEMENT: f64 = 0.10;

/// Absorbs float rounding at threshold boundaries, e.g. `(1.0 - 0.9) / 1.0`.
pub(crate) const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sample_index: usize,
    pub verdict: Judgement,
    pub new_runtime: Option<PerfMeasurement>,
}

impl Candidate {
    pub fn correct(sample_index: usize, runtime: PerfMeasurement) -> Self {
        Self {
            sample_index,
            verdict: Judgement::Correct,
            new_runtime: Some(runtime),
        }
    }

    pub fn incorrect(sample_index: usize) -> Self {
        Self {
            sample_index,
            verdict: Judgement::Incorrect,
            new_runtime: None,
        }
    }

    fn usable_runtime(&self) -> Option<PerfMeasurement> {
        match self.verdict {
            Judgement::Correct => self.new_runtime,
            Judgement::Incorrect => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub example_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
    pub old_runtime: PerfMeasurement,
    pub candidates: Vec<Candidate>,
    pub best: Option<usize>,
    pub clamped_speedup: f64,
    pub counted_optimized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub k: usize,
    pub n_rows: usize,
    pub pct_opt: f64,
    pub mean_speedup: f64,
    pub pct_correct: f64,
    /// Secondary statistic: geometric mean of the clamped speedups.
    pub geomean_speedup: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate zero rows")]
    Empty,
    #[error(transparent)]
    Perf(#[from] PerfError),
}

/// `old / new`, unclamped.
pub fn speedup(old: &PerfMeasurement, new: &PerfMeasurement) -> Result<f64, PerfError> {
    old.check_unit(new)?;
    Ok(old.value() / new.value())
}

/// 1.0 unless the candidate is correct and strictly faster.
pub fn clamped_speedup(old: &PerfMeasurement, candidate: Option<&Candidate>) -> f64 {
    candidate
        .and_then(Candidate::usable_runtime)
        .and_then(|new| speedup(old, &new).ok())
        .filter(|s| *s > 1.0)
        .unwrap_or(1.0)
}

/// Sample index of the correct candidate with the smallest runtime; ties go
/// to the lowest sample index.
pub fn best_of_k(candidates: &[Candidate]) -> Option<usize> {
    candidates
        .iter()
        .filter_map(|c| c.usable_runtime().map(|r| (c.sample_index, r.value())))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(idx, _)| idx)
}

/// True iff the candidate is correct and `(o - n) / o >= min_improvement`.
pub fn counted_optimized(
    old: &PerfMeasurement,
    candidate: Option<&Candidate>,
    min_improvement: f64,
) -> bool {
    let Some(new) = candidate.and_then(Candidate::usable_runtime) else {
        return false;
    };
    if old.check_unit(&new).is_err() {
        return false;
    }
    (old.value() - new.value()) / old.value() >= min_improvement - BOUNDARY_EPS
}

/// Scores one example using the candidates whose `sample_index < k`
/// (all of them when `k` is `None`).
pub fn evaluate_row(
    example_id: impl Into<String>,
    old_runtime: PerfMeasurement,
    candidates: &[Candidate],
    k: Option<usize>,
    min_improvement: f64,
) -> EvalRow {
    let pool: Vec<Candidate> = candidates
        .iter()
        .filter(|c| k.is_none_or(|k| c.sample_index < k))
        .copied()
        .collect();
    let best = best_of_k(&pool);
    let chosen = best.and_then(|i| pool.iter().find(|c| c.sample_index == i));
    EvalRow {
        example_id: example_id.into(),
        problem_id: None,
        old_runtime,
        best,
        clamped_speedup: clamped_speedup(&old_runtime, chosen),
        counted_optimized: counted_optimized(&old_runtime, chosen, min_improvement),
        candidates: pool,
    }
}

/// Corpus-level %Opt, mean clamped speedup and %Correct.
pub fn aggregate(rows: &[EvalRow], k: usize) -> Result<MetricsSummary, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = rows.len() as f64;
    let optimized = rows.iter().filter(|r| r.counted_optimized).count() as f64;
    let correct = rows
        .iter()
        .filter(|r| r.candidates.iter().any(|c| c.verdict == Judgement::Correct))
        .count() as f64;
    let mean = rows.iter().map(|r| r.clamped_speedup).sum::<f64>() / n;
    let log_mean = rows.iter().map(|r| r.clamped_speedup.ln()).sum::<f64>() / n;
    Ok(MetricsSummary {
        k,
        n_rows: rows.len(),
        pct_opt: optimized / n,
        mean_speedup: mean,
        pct_correct: correct / n,
        geomean_speedup: log_mean.exp(),
    })
}

/// [`aggregate`] per `problem_id` (rows without one go under `""`).
pub fn aggregate_by_problem(
    rows: &[EvalRow],
    k: usize,
) -> Result<BTreeMap<String, MetricsSummary>, MetricsError> {
    let mut groups: BTreeMap<String, Vec<EvalRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(r.problem_id.clone().unwrap_or_default())
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|(key, rows)| aggregate(&rows, k).map(|s| (key, s)))
        .collect()
}
