//! From submission logs to slow→fast program pairs.
//!
//! The pipeline is:
//!
//! 1. [`parse_submissions`]: JSONL records, malformed ones become [`Reject`]s.
//! 2. [`build_trajectories`]: accepted submissions per `(user, problem)`,
//!    ordered by `(timestamp, submission_id)`.
//! 3. [`relabel_runtimes`]: re-measure every program on the problem's test
//!    suite with a deterministic backend (sum over tests). Programs that fail
//!    to compile or fail any test are dropped.
//! 4. [`make_pairs`]: every ordered `(i, j)` with `i < j` whose relative
//!    improvement `(r_i - r_j) / r_i` is strictly above the threshold.
//! 5. [`split_by_problem`]: a seeded, problem-disjoint train/val/test split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{judge, Harness, Judgement, SuiteError, TestCase};
use crate::metrics::BOUNDARY_EPS;
use crate::perf::{PerfBackend, PerfError, PerfMeasurement};
use crate::util::{parallel_map, sha256_hex};

/// Default pair threshold: keep pairs strictly more than 10% faster.
pub const DEFAULT_MIN_IMPROVEMENT: f64 = 0.10;

/// Default per-problem cap for the high-quality subset.
pub const DEFAULT_MAX_PER_PROBLEM: usize = 4;

/// Default ratio above which duplicate code with disagreeing reported
/// runtimes is flagged.
pub const DEFAULT_DUPLICATE_RATIO: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub user_id: String,
    pub problem_id: String,
    pub timestamp: u64,
    pub language: String,
    pub status: Status,
    pub code: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmissionRecord {
    submission_id: String,
    user_id: String,
    problem_id: String,
    timestamp: u64,
    language: String,
    status: Status,
    #[serde(default)]
    code: Option<String>,
    #[serde(default)]
    code_path: Option<String>,
}

/// A record that could not be used, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// Submission id when known.
    pub id: Option<String>,
    /// 1-based line in the input file, for parse failures.
    pub line: Option<usize>,
    pub stage: RejectStage,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectStage {
    Parse,
    Suite,
    Unmeasurable,
}

/// Parses `submissions.jsonl`. Code comes inline (`code`) or from a file
/// (`code_path`, relative to `code_root`). Bad records never abort the batch.
pub fn parse_submissions(text: &str, code_root: &Path) -> (Vec<Submission>, Vec<Reject>) {
    let mut subs = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let reject = |id: Option<String>, reason: String| Reject {
            id,
            line: Some(n + 1),
            stage: RejectStage::Parse,
            reason,
        };
        let rec: SubmissionRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("submission_id")?.as_str().map(str::to_string));
                rejects.push(reject(id, format!("malformed record: {e}")));
                continue;
            }
        };
        let code = match (rec.code, rec.code_path) {
            (Some(code), _) => code,
            (None, Some(rel)) => match std::fs::read_to_string(code_root.join(&rel)) {
                Ok(code) => code,
                Err(e) => {
                    rejects.push(reject(Some(rec.submission_id), format!("code_path {rel}: {e}")));
                    continue;
                }
            },
            (None, None) => {
                rejects.push(reject(
                    Some(rec.submission_id),
                    "malformed record: missing field `code` (or `code_path`)".into(),
                ));
                continue;
            }
        };
        if !seen.insert(rec.submission_id.clone()) {
            rejects.push(reject(Some(rec.submission_id), "duplicate submission_id".into()));
            continue;
        }
        subs.push(Submission {
            submission_id: rec.submission_id,
            user_id: rec.user_id,
            problem_id: rec.problem_id,
            timestamp: rec.timestamp,
            language: rec.language,
            status: rec.status,
            code,
        });
    }
    (subs, rejects)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub problem_id: String,
    pub programs: Vec<Submission>,
}

/// Groups accepted submissions by `(user, problem)`. Output is ordered by
/// `(problem_id, user_id)`.
pub fn build_trajectories(submissions: &[Submission]) -> Vec<Trajectory> {
    let mut groups: BTreeMap<(&str, &str), Vec<&Submission>> = BTreeMap::new();
    for s in submissions.iter().filter(|s| s.status == Status::Accepted) {
        groups
            .entry((s.problem_id.as_str(), s.user_id.as_str()))
            .or_default()
            .push(s);
    }
    groups
        .into_iter()
        .map(|((problem, user), mut subs)| {
            subs.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.submission_id.cmp(&b.submission_id))
            });
            Trajectory {
                user_id: user.to_string(),
                problem_id: problem.to_string(),
                programs: subs.into_iter().cloned().collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNABLE: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Human,
    SelfPlay,
}

/// A slow→fast pair of programs for the same problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramPair {
    pub pair_id: String,
    pub problem_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    pub src_id: String,
    pub tgt_id: String,
    pub src: String,
    pub tgt: String,
    pub src_runtime: PerfMeasurement,
    pub tgt_runtime: PerfMeasurement,
    pub relative_improvement: f64,
    pub split: Split,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<String>,
}

impl ProgramPair {
    /// `src_runtime / tgt_runtime`.
    pub fn speedup(&self) -> f64 {
        self.src_runtime.value() / self.tgt_runtime.value()
    }
}

/// `(slow - fast) / slow`.
pub fn relative_improvement(slow: f64, fast: f64) -> f64 {
    (slow - fast) / slow
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no runtime for program {0:?}")]
    MissingRuntime(String),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("{problems} problem(s) cannot fill {splits} non-empty split(s)")]
    TooFewProblems { problems: usize, splits: usize },
}

/// Emits every `(y_i, y_j)`, `i < j`, whose relative improvement is strictly
/// greater than `min_improvement`.
pub fn make_pairs(
    traj: &Trajectory,
    runtimes: &BTreeMap<String, PerfMeasurement>,
    min_improvement: f64,
) -> Result<Vec<ProgramPair>, DatasetError> {
    let timed: Vec<(&Submission, PerfMeasurement)> = traj
        .programs
        .iter()
        .map(|p| {
            runtimes
                .get(&p.submission_id)
                .map(|r| (p, *r))
                .ok_or_else(|| DatasetError::MissingRuntime(p.submission_id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    for (i, (slow, slow_rt)) in timed.iter().enumerate() {
        for (fast, fast_rt) in &timed[i + 1..] {
            slow_rt.check_unit(fast_rt)?;
            let rel = relative_improvement(slow_rt.value(), fast_rt.value());
            if rel > min_improvement + BOUNDARY_EPS {
                pairs.push(ProgramPair {
                    pair_id: format!("{}->{}", slow.submission_id, fast.submission_id),
                    problem_id: traj.problem_id.clone(),
                    user_id: Some(traj.user_id.clone()),
                    src_id: slow.submission_id.clone(),
                    tgt_id: fast.submission_id.clone(),
                    src: slow.code.clone(),
                    tgt: fast.code.clone(),
                    src_runtime: *slow_rt,
                    tgt_runtime: *fast_rt,
                    relative_improvement: rel,
                    split: Split::Unassigned,
                    provenance: Provenance::Human,
                    class_id: None,
                });
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Default)]
pub struct Relabeled {
    pub runtimes: BTreeMap<String, PerfMeasurement>,
    pub unmeasurable: Vec<Reject>,
}

/// Measures each program as the sum of its per-test costs. Anything that
/// does not compile, fails a test or times out is reported as unmeasurable.
pub fn relabel_runtimes(
    programs: &[&Submission],
    suite: &[TestCase],
    harness: &Harness,
    backend: &dyn PerfBackend,
    workdir: &Path,
    workers: usize,
) -> Relabeled {
    let reports = parallel_map(programs, workers, |p| {
        harness.evaluate(&p.submission_id, &p.code, suite, backend, workdir)
    });
    let mut out = Relabeled::default();
    for (p, report) in programs.iter().zip(reports) {
        match (judge(&report), report.total_runtime) {
            (Judgement::Correct, Some(total)) => {
                out.runtimes.insert(p.submission_id.clone(), total);
            }
            _ => out.unmeasurable.push(Reject {
                id: Some(p.submission_id.clone()),
                line: None,
                stage: RejectStage::Unmeasurable,
                reason: report.failure_reason().unwrap_or_else(|| "unmeasurable".into()),
            }),
        }
    }
    out
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios([0.8, 0.1, 0.1])
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let arr: [f64; 3] = parts
            .try_into()
            .map_err(|_| "expected three comma-separated ratios".to_string())?;
        Ok(SplitRatios(arr))
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), DatasetError> {
        let sum: f64 = self.0.iter().sum();
        if self.0.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios(self.0));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items, then at least one item
    /// for every split with a nonzero ratio (taken from the largest split).
    pub fn counts(&self, n: usize) -> Result<[usize; 3], DatasetError> {
        self.validate()?;
        let nonzero = self.0.iter().filter(|r| **r > 0.0).count();
        if n == 0 {
            return Ok([0; 3]);
        }
        if n < nonzero {
            return Err(DatasetError::TooFewProblems {
                problems: n,
                splits: nonzero,
            });
        }
        let quotas: Vec<f64> = self.0.iter().map(|r| r * n as f64).collect();
        let mut counts = [0usize; 3];
        for (c, q) in counts.iter_mut().zip(&quotas) {
            *c = q.floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut left = n.saturating_sub(counts.iter().sum());
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if self.0[i] > 0.0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        for i in 0..3 {
            if self.0[i] > 0.0 && counts[i] == 0 {
                let donor = (0..3)
                    .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                    .expect("three splits");
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignments: BTreeMap<String, Split>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl SplitAssignment {
    pub fn get(&self, problem_id: &str) -> Split {
        self.assignments
            .get(problem_id)
            .copied()
            .unwrap_or(Split::Unassigned)
    }

    /// Stamps every pair with its problem's split.
    pub fn apply(&self, pairs: &mut [ProgramPair]) {
        for p in pairs {
            p.split = self.get(&p.problem_id);
        }
    }
}

/// Shuffles the distinct problems with a ChaCha8 stream seeded by `seed`
/// and cuts the shuffled list by [`SplitRatios::counts`].
pub fn split_by_problem(
    pairs: &[ProgramPair],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    let mut problems: Vec<&str> = pairs.iter().map(|p| p.problem_id.as_str()).collect();
    problems.sort_unstable();
    problems.dedup();
    let counts = ratios.counts(problems.len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    problems.shuffle(&mut rng);

    let mut assignments = BTreeMap::new();
    let mut it = problems.into_iter();
    for (split, count) in Split::ASSIGNABLE.iter().zip(counts) {
        for problem in it.by_ref().take(count) {
            assignments.insert(problem.to_string(), *split);
        }
    }
    Ok(SplitAssignment {
        assignments,
        seed,
        ratios,
    })
}

/// Per problem, keeps the `max_per_problem` pairs with the highest speedup.
/// Ties go to the lexicographically smaller `(sha256(src), sha256(tgt))`.
pub fn build_hq_subset(pairs: &[ProgramPair], max_per_problem: usize) -> Vec<ProgramPair> {
    let mut by_problem: BTreeMap<&str, Vec<(&ProgramPair, String, String)>> = BTreeMap::new();
    for p in pairs {
        by_problem.entry(&p.problem_id).or_default().push((
            p,
            sha256_hex(p.src.as_bytes()),
            sha256_hex(p.tgt.as_bytes()),
        ));
    }
    let mut out = Vec::new();
    for (_, mut group) in by_problem {
        group.sort_by(|a, b| {
            b.0.speedup()
                .total_cmp(&a.0.speedup())
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        out.extend(group.into_iter().take(max_per_problem).map(|(p, _, _)| p.clone()));
    }
    out
}

/// Collapses runs of spaces and tabs, strips trailing whitespace, keeps
/// line structure.
pub fn normalize_whitespace(code: &str) -> String {
    let mut out = String::with_capacity(code.len());
    for (i, line) in code.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut in_run = false;
        for ch in line.trim_end().chars() {
            if ch == ' ' || ch == '\t' {
                if !in_run {
                    out.push(' ');
                }
                in_run = true;
            } else {
                out.push(ch);
                in_run = false;
            }
        }
    }
    out
}

/// Byte-identical (after whitespace normalization) submissions whose
/// reported runtimes disagree by more than a ratio threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub code_hash: String,
    pub submission_ids: Vec<String>,
    pub min_reported: f64,
    pub max_reported: f64,
    pub ratio: f64,
}

pub fn audit_duplicate_runtime_inconsistency(
    submissions: &[Submission],
    reported_runtimes: &HashMap<String, f64>,
    threshold: f64,
) -> Vec<DuplicateGroup> {
    let mut groups: BTreeMap<String, Vec<(&str, f64)>> = BTreeMap::new();
    for s in submissions {
        let Some(&t) = reported_runtimes.get(&s.submission_id) else {
            continue;
        };
        if !(t.is_finite() && t > 0.0) {
            continue;
        }
        let hash = sha256_hex(normalize_whitespace(&s.code).as_bytes());
        groups.entry(hash).or_default().push((&s.submission_id, t));
    }
    let mut out: Vec<DuplicateGroup> = groups
        .into_iter()
        .filter(|(_, members)| members.len() >= 2)
        .filter_map(|(code_hash, mut members)| {
            members.sort_by(|a, b| a.0.cmp(b.0));
            let min = members.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
            let max = members.iter().map(|m| m.1).fold(0.0, f64::max);
            let ratio = max / min;
            (ratio > threshold).then(|| DuplicateGroup {
                code_hash,
                submission_ids: members.iter().map(|m| m.0.to_string()).collect(),
                min_reported: min,
                max_reported: max,
                ratio,
            })
        })
        .collect();
    out.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then_with(|| a.code_hash.cmp(&b.code_hash)));
    out
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub min_improvement: f64,
    pub ratios: SplitRatios,
    pub seed: u64,
    pub workers: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            min_improvement: DEFAULT_MIN_IMPROVEMENT,
            ratios: SplitRatios::default(),
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetOutput {
    pub pairs: Vec<ProgramPair>,
    pub splits: SplitAssignment,
    pub rejects: Vec<Reject>,
}

/// End-to-end build: trajectories, relabeling, pairing and splitting.
///
/// Only programs in trajectories of length two or more are measured, since
/// a singleton trajectory cannot produce a pair.
pub fn build_dataset<S>(
    submissions: &[Submission],
    suites: S,
    harness: &Harness,
    backend: &dyn PerfBackend,
    workdir: &Path,
    opts: &BuildOptions,
) -> Result<DatasetOutput, DatasetError>
where
    S: Fn(&str) -> Result<Vec<TestCase>, SuiteError> + Sync,
{
    let trajectories = build_trajectories(submissions);

    let mut by_problem: BTreeMap<&str, Vec<&Submission>> = BTreeMap::new();
    for t in trajectories.iter().filter(|t| t.programs.len() >= 2) {
        by_problem
            .entry(&t.problem_id)
            .or_default()
            .extend(t.programs.iter());
    }
    let problems: Vec<(&str, Vec<&Submission>)> = by_problem.into_iter().collect();

    let per_problem = parallel_map(&problems, opts.workers, |(problem, programs)| {
        match suites(problem) {
            Ok(suite) => relabel_runtimes(programs, &suite, harness, backend, workdir, 1),
            Err(e) => Relabeled {
                runtimes: BTreeMap::new(),
                unmeasurable: programs
                    .iter()
                    .map(|p| Reject {
                        id: Some(p.submission_id.clone()),
                        line: None,
                        stage: RejectStage::Suite,
                        reason: e.to_string(),
                    })
                    .collect(),
            },
        }
    });

    let mut runtimes = BTreeMap::new();
    let mut rejects = Vec::new();
    for r in per_problem {
        runtimes.extend(r.runtimes);
        rejects.extend(r.unmeasurable);
    }

    let mut pairs = Vec::new();
    for t in &trajectories {
        let measured = Trajectory {
            user_id: t.user_id.clone(),
            problem_id: t.problem_id.clone(),
            programs: t
                .programs
                .iter()
                .filter(|p| runtimes.contains_key(&p.submission_id))
                .cloned()
                .collect(),
        };
        pairs.extend(make_pairs(&measured, &runtimes, opts.min_improvement)?);
    }

    let splits = split_by_problem(&pairs, opts.ratios, opts.seed)?;
    splits.apply(&mut pairs);
    Ok(DatasetOutput {
        pairs,
        splits,
        rejects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::Unit;
    use proptest::prelude::*;

    fn sub(id: &str, user: &str, problem: &str, ts: u64, status: Status) -> Submission {
        Submission {
            submission_id: id.into(),
            user_id: user.into(),
            problem_id: problem.into(),
            timestamp: ts,
            language: "C++".into(),
            status,
            code: format!("// {id}"),
        }
    }

    fn cu(v: f64) -> PerfMeasurement {
        PerfMeasurement::new(v, Unit::CostUnits).unwrap()
    }

    fn traj_with(runtimes: &[f64]) -> (Trajectory, BTreeMap<String, PerfMeasurement>) {
        let programs: Vec<Submission> = (0..runtimes.len())
            .map(|i| sub(&format!("s{}", i + 1), "u", "p", i as u64, Status::Accepted))
            .collect();
        let rt = programs
            .iter()
            .zip(runtimes)
            .map(|(p, r)| (p.submission_id.clone(), cu(*r)))
            .collect();
        (
            Trajectory {
                user_id: "u".into(),
                problem_id: "p".into(),
                programs,
            },
            rt,
        )
    }

    fn pair(problem: &str, src: &str, slow: f64, fast: f64) -> ProgramPair {
        ProgramPair {
            pair_id: format!("{problem}:{src}"),
            problem_id: problem.into(),
            user_id: None,
            src_id: src.into(),
            tgt_id: format!("{src}f"),
            src: src.into(),
            tgt: format!("{src} fast"),
            src_runtime: cu(slow),
            tgt_runtime: cu(fast),
            relative_improvement: relative_improvement(slow, fast),
            split: Split::Unassigned,
            provenance: Provenance::Human,
            class_id: None,
        }
    }

    #[test]
    fn trajectories_sort_by_time() {
        let subs = vec![
            sub("c", "A", "P", 3, Status::Accepted),
            sub("a", "A", "P", 1, Status::Accepted),
            sub("b", "A", "P", 2, Status::Accepted),
        ];
        let t = build_trajectories(&subs);
        assert_eq!(t.len(), 1);
        let ts: Vec<u64> = t[0].programs.iter().map(|p| p.timestamp).collect();
        assert_eq!(ts, vec![1, 2, 3]);
    }

    #[test]
    fn trajectories_group_by_user() {
        let subs = vec![
            sub("a", "A", "P", 1, Status::Accepted),
            sub("b", "B", "P", 1, Status::Accepted),
        ];
        assert_eq!(build_trajectories(&subs).len(), 2);
    }

    #[test]
    fn trajectories_drop_rejected() {
        let subs = vec![
            sub("1", "A", "P", 1, Status::Accepted),
            sub("2", "A", "P", 2, Status::Rejected),
            sub("3", "A", "P", 3, Status::Accepted),
            sub("4", "A", "P", 4, Status::Rejected),
            sub("5", "A", "P", 5, Status::Accepted),
        ];
        let t = build_trajectories(&subs);
        assert_eq!(t[0].programs.len(), 3);
        // Only-rejected groups produce nothing.
        assert!(build_trajectories(&[sub("x", "A", "Q", 1, Status::Rejected)]).is_empty());
        assert!(build_trajectories(&[]).is_empty());
    }

    #[test]
    fn equal_timestamps_break_by_id() {
        let subs = vec![
            sub("s9", "A", "P", 5, Status::Accepted),
            sub("s1", "A", "P", 5, Status::Accepted),
        ];
        let t = build_trajectories(&subs);
        assert_eq!(t[0].programs[0].submission_id, "s1");
    }

    #[test]
    fn pairs_hand_enumerated() {
        // (1,2): 0.15 kept, (1,3): 0.20 kept, (2,3): 5/85 = 0.0588 dropped.
        let (t, rt) = traj_with(&[100.0, 85.0, 80.0]);
        let pairs = make_pairs(&t, &rt, DEFAULT_MIN_IMPROVEMENT).unwrap();
        let ids: Vec<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
        assert_eq!(ids, vec!["s1->s2", "s1->s3"]);
        assert!((pairs[0].relative_improvement - 0.15).abs() < 1e-12);
        assert!((pairs[1].relative_improvement - 0.20).abs() < 1e-12);
    }

    #[test]
    fn pairs_need_improvement() {
        let (t, rt) = traj_with(&[100.0, 100.0]);
        assert!(make_pairs(&t, &rt, 0.10).unwrap().is_empty());
        let (t, rt) = traj_with(&[100.0, 89.999]);
        assert_eq!(make_pairs(&t, &rt, 0.10).unwrap().len(), 1);
    }

    #[test]
    fn pair_threshold_is_strict() {
        let (t, rt) = traj_with(&[100.0, 90.0]);
        assert!(make_pairs(&t, &rt, 0.10).unwrap().is_empty());
        // (1.0 - 0.9) / 1.0 rounds to just under 0.1; (10 - 9) / 10 is exact.
        let (t, rt) = traj_with(&[10.0, 9.0]);
        assert!(make_pairs(&t, &rt, 0.10).unwrap().is_empty());
    }

    #[test]
    fn missing_runtime_names_program() {
        let (t, mut rt) = traj_with(&[100.0, 50.0]);
        rt.remove("s2");
        match make_pairs(&t, &rt, 0.1) {
            Err(DatasetError::MissingRuntime(id)) => assert_eq!(id, "s2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_counts_floor_then_distribute() {
        assert_eq!(SplitRatios([0.8, 0.1, 0.1]).counts(10).unwrap(), [8, 1, 1]);
        assert_eq!(SplitRatios([0.8, 0.1, 0.1]).counts(7).unwrap(), [5, 1, 1]);
        assert_eq!(SplitRatios([0.5, 0.0, 0.5]).counts(3).unwrap(), [2, 0, 1]);
        assert_eq!(SplitRatios([1.0, 0.0, 0.0]).counts(4).unwrap(), [4, 0, 0]);
        assert!(matches!(
            SplitRatios([0.8, 0.1, 0.1]).counts(2),
            Err(DatasetError::TooFewProblems { problems: 2, splits: 3 })
        ));
        assert!(matches!(
            SplitRatios([0.8, 0.1, 0.2]).counts(10),
            Err(DatasetError::BadRatios(_))
        ));
        assert_eq!(SplitRatios::default().counts(0).unwrap(), [0, 0, 0]);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let pairs: Vec<ProgramPair> = (0..10)
            .flat_map(|i| {
                let p = format!("p{i:02}");
                vec![pair(&p, "a", 10.0, 5.0), pair(&p, "b", 10.0, 4.0)]
            })
            .collect();
        let a = split_by_problem(&pairs, SplitRatios::default(), 7).unwrap();
        let b = split_by_problem(&pairs, SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        let count = |s| a.assignments.values().filter(|v| **v == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (8, 1, 1));
        let c = split_by_problem(&pairs, SplitRatios::default(), 8).unwrap();
        assert_ne!(a.assignments, c.assignments, "seed should matter");
    }

    #[test]
    fn hq_subset_caps_per_problem() {
        let speedups = [9.0, 7.0, 5.0, 3.0, 2.0, 1.5];
        let pairs: Vec<ProgramPair> = speedups
            .iter()
            .enumerate()
            .map(|(i, s)| pair("p", &format!("v{i}"), 90.0, 90.0 / s))
            .collect();
        let kept = build_hq_subset(&pairs, DEFAULT_MAX_PER_PROBLEM);
        let got: Vec<f64> = kept.iter().map(|p| (p.speedup() * 1e9).round() / 1e9).collect();
        assert_eq!(got, vec![9.0, 7.0, 5.0, 3.0]);

        assert_eq!(build_hq_subset(&pairs[..2], 4).len(), 2);

        let two: Vec<ProgramPair> = ["p", "q"]
            .iter()
            .flat_map(|prob| (0..5).map(move |i| pair(prob, &format!("{prob}{i}"), 10.0, 9.0 - i as f64)))
            .collect();
        assert_eq!(build_hq_subset(&two, 4).len(), 8);
    }

    #[test]
    fn duplicate_audit_flags_inconsistent_reports() {
        let mut a = sub("s766827701", "u1", "p03160", 1, Status::Accepted);
        let mut b = sub("s964782197", "u2", "p03160", 2, Status::Accepted);
        a.code = "int main() {\n  return 0;  \n}\n".into();
        b.code = "int main()  {\n\treturn 0;\n}\n".into();
        let c = sub("other", "u3", "p03160", 3, Status::Accepted);
        let reported: HashMap<String, f64> = [
            ("s766827701".to_string(), 200.0),
            ("s964782197".to_string(), 82.0),
            ("other".to_string(), 10.0),
        ]
        .into();
        let groups = audit_duplicate_runtime_inconsistency(&[a.clone(), b.clone(), c], &reported, 1.1);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].submission_ids, vec!["s766827701", "s964782197"]);
        assert!((groups[0].ratio - 200.0 / 82.0).abs() < 1e-12);
        assert_eq!((groups[0].ratio * 100.0).round() / 100.0, 2.44);

        let equal: HashMap<String, f64> =
            [("s766827701".to_string(), 50.0), ("s964782197".to_string(), 50.0)].into();
        assert!(audit_duplicate_runtime_inconsistency(&[a, b], &equal, 1.1).is_empty());
    }

    #[test]
    fn distinct_corpus_has_no_duplicates() {
        let subs: Vec<Submission> = (0..5)
            .map(|i| sub(&format!("s{i}"), "u", "p", i, Status::Accepted))
            .collect();
        let reported = subs.iter().map(|s| (s.submission_id.clone(), 1.0 + s.timestamp as f64)).collect();
        assert!(audit_duplicate_runtime_inconsistency(&subs, &reported, 1.1).is_empty());
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("a  \t b   \nc\t\n"), "a b\nc\n");
    }

    #[test]
    fn parse_collects_rejects() {
        let text = r#"{"submission_id":"s1","user_id":"u","problem_id":"p","timestamp":1,"language":"C++","status":"Accepted","code":"x"}
{"submission_id":"s2","user_id":"u","problem_id":"p","language":"C++","status":"Accepted","code":"x"}
not json
{"submission_id":"s1","user_id":"u","problem_id":"p","timestamp":2,"language":"C++","status":"Accepted","code":"y"}
{"submission_id":"s3","user_id":"u","problem_id":"p","timestamp":-4,"language":"C++","status":"Accepted","code":"x"}
{"submission_id":"s4","user_id":"u","problem_id":"p","timestamp":4,"language":"C++","status":"Rejected"}
"#;
        let (subs, rejects) = parse_submissions(text, Path::new("."));
        assert_eq!(subs.len(), 1);
        assert_eq!(rejects.len(), 5);
        assert_eq!(rejects[0].id.as_deref(), Some("s2"));
        assert!(rejects[0].reason.contains("timestamp"));
        assert_eq!(rejects[1].line, Some(3));
        assert!(rejects[2].reason.contains("duplicate"));
        assert!(rejects[4].reason.contains("code"));
    }

    #[test]
    fn code_path_is_resolved() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.cpp"), "int main(){}").unwrap();
        let text = r#"{"submission_id":"s1","user_id":"u","problem_id":"p","timestamp":1,"language":"C++","status":"Accepted","code_path":"a.cpp"}"#;
        let (subs, rejects) = parse_submissions(text, dir.path());
        assert!(rejects.is_empty());
        assert_eq!(subs[0].code, "int main(){}");
    }

    proptest! {
        #[test]
        fn emitted_pairs_satisfy_threshold(
            runtimes in prop::collection::vec(1.0f64..1000.0, 0..12),
            thr in 0.0f64..0.9,
        ) {
            let (t, rt) = traj_with(&runtimes);
            let pairs = make_pairs(&t, &rt, thr).unwrap();
            let n = runtimes.len();
            prop_assert!(pairs.len() <= n * n.saturating_sub(1) / 2);
            for p in &pairs {
                let rel = relative_improvement(p.src_runtime.value(), p.tgt_runtime.value());
                prop_assert!(rel > thr + BOUNDARY_EPS);
                prop_assert_eq!(rel, p.relative_improvement);
            }
            // Brute force: count qualifying i < j directly.
            let expected = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| (runtimes[i] - runtimes[j]) / runtimes[i] > thr + 1e-12)
                .count();
            prop_assert_eq!(pairs.len(), expected);
        }

        #[test]
        fn split_is_a_partition(n in 3usize..40, seed in any::<u64>(), a in 1u32..10, b in 1u32..10, c in 1u32..10) {
            let total = (a + b + c) as f64;
            let ratios = SplitRatios([a as f64 / total, b as f64 / total, 1.0 - a as f64 / total - b as f64 / total]);
            let pairs: Vec<ProgramPair> = (0..n).map(|i| pair(&format!("p{i}"), "x", 2.0, 1.0)).collect();
            let s = split_by_problem(&pairs, ratios, seed).unwrap();
            prop_assert_eq!(s.assignments.len(), n);
            let counts = ratios.counts(n).unwrap();
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            for (split, want) in Split::ASSIGNABLE.iter().zip(counts) {
                prop_assert_eq!(s.assignments.values().filter(|v| *v == split).count(), want);
            }
        }

        #[test]
        fn hq_subset_keeps_the_fastest(speedups in prop::collection::vec(1.01f64..50.0, 0..15), cap in 1usize..6) {
            let pairs: Vec<ProgramPair> = speedups.iter().enumerate()
                .map(|(i, s)| pair("p", &format!("v{i}"), 100.0, 100.0 / s)).collect();
            let kept = build_hq_subset(&pairs, cap);
            prop_assert_eq!(kept.len(), speedups.len().min(cap));
            let kept_ids: HashSet<&str> = kept.iter().map(|p| p.pair_id.as_str()).collect();
            let min_kept = kept.iter().map(|p| p.speedup()).fold(f64::INFINITY, f64::min);
            let max_dropped = pairs.iter().filter(|p| !kept_ids.contains(p.pair_id.as_str()))
                .map(|p| p.speedup()).fold(0.0, f64::max);
            prop_assert!(min_kept >= max_dropped);
        }
    }
}
