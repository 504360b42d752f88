//! Performance measurement backends.
//!
//! A backend turns one `(program, test input)` execution into a single
//! positive cost. Three implementations are provided:
//!
//! * [`SimulatorDriver`] shells out to a cycle-level simulator through a
//!   command template and reads one key from the stats file it writes.
//! * [`ManifestBackend`] looks costs up in a JSON table. It is what the
//!   fixtures and offline runs use.
//! * [`WallClockBackend`] times the real process, or in simulated mode
//!   returns `base_cost × LogNormal(0, σ)` from a seeded ChaCha8 stream.
//!
//! The first two are deterministic; wall-clock is not.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process::{self, ExitKind, Limits};
use crate::util::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    SimSeconds,
    CostUnits,
    WallSeconds,
}

/// A strictly positive cost tagged with its unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasurement")]
pub struct PerfMeasurement {
    value: f64,
    unit: Unit,
}

#[derive(Deserialize)]
struct RawMeasurement {
    value: f64,
    unit: Unit,
}

impl TryFrom<RawMeasurement> for PerfMeasurement {
    type Error = PerfError;

    fn try_from(raw: RawMeasurement) -> Result<Self, Self::Error> {
        PerfMeasurement::new(raw.value, raw.unit)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("measurement must be finite and positive, got {0}")]
    NonPositive(f64),
    #[error("cannot combine {left:?} with {right:?}")]
    UnitMismatch { left: Unit, right: Unit },
}

impl PerfMeasurement {
    pub fn new(value: f64, unit: Unit) -> Result<Self, PerfError> {
        if value.is_finite() && value > 0.0 {
            Ok(Self { value, unit })
        } else {
            Err(PerfError::NonPositive(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn check_unit(&self, other: &PerfMeasurement) -> Result<(), PerfError> {
        if self.unit == other.unit {
            Ok(())
        } else {
            Err(PerfError::UnitMismatch {
                left: self.unit,
                right: other.unit,
            })
        }
    }

    /// Sums measurements left to right. Returns `None` for an empty input.
    pub fn sum<'a, I>(items: I) -> Result<Option<PerfMeasurement>, PerfError>
    where
        I: IntoIterator<Item = &'a PerfMeasurement>,
    {
        let mut acc: Option<PerfMeasurement> = None;
        for m in items {
            acc = Some(match acc {
                None => *m,
                Some(a) => {
                    a.check_unit(m)?;
                    PerfMeasurement {
                        value: a.value + m.value,
                        unit: a.unit,
                    }
                }
            });
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub deterministic: bool,
    pub unit: Unit,
}

/// Everything a backend may need to cost one test execution.
#[derive(Debug, Clone, Copy)]
pub struct MeasureRequest<'a> {
    pub program_id: &'a str,
    pub artifact: Option<&'a Path>,
    pub test_index: usize,
    pub input: &'a [u8],
    pub limits: &'a Limits,
}

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("no manifest entry for program {program_id:?} test {test_index}")]
    MissingEntry { program_id: String, test_index: usize },
    #[error("measurement timed out after {0:?}")]
    Timeout(Duration),
    #[error("measurement process failed ({status}): {stderr}")]
    ProcessFailed { status: String, stderr: String },
    #[error("stats output has no {0:?} key")]
    StatsKeyMissing(String),
    #[error("stats value for {key:?} is not a positive number: {raw:?}")]
    StatsUnparsable { key: String, raw: String },
    #[error("backend needs a compiled artifact")]
    MissingArtifact,
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl MeasurementError {
    /// Stable short name, used in rejects files and diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            MeasurementError::MissingEntry { .. } => "MissingEntry",
            MeasurementError::Timeout(_) => "Timeout",
            MeasurementError::ProcessFailed { .. } => "ProcessFailed",
            MeasurementError::StatsKeyMissing(_) => "StatsKeyMissing",
            MeasurementError::StatsUnparsable { .. } => "StatsUnparsable",
            MeasurementError::MissingArtifact => "MissingArtifact",
            MeasurementError::Perf(_) => "InvalidValue",
            MeasurementError::Io(_) => "Io",
        }
    }
}

/// Shared contract of all measurement backends. Implementations must be
/// safe to call from several threads at once.
pub trait PerfBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    fn measure(&self, req: &MeasureRequest<'_>) -> Result<PerfMeasurement, MeasurementError>;
}

// ---------------------------------------------------------------------------
// Manifest

/// Table-driven backend: `{ "<program_id>": { "<test_index>": cost } }`.
#[derive(Debug, Clone, Default)]
pub struct ManifestBackend {
    entries: HashMap<String, BTreeMap<usize, f64>>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest key {key:?} under {program_id:?} is not a test index")]
    BadIndex { program_id: String, key: String },
    #[error("manifest value for {program_id:?} test {test_index} must be positive, got {value}")]
    NonPositive {
        program_id: String,
        test_index: usize,
        value: f64,
    },
}

impl ManifestBackend {
    pub fn from_json_str(text: &str) -> Result<Self, ManifestError> {
        let raw: BTreeMap<String, BTreeMap<String, f64>> = serde_json::from_str(text)?;
        let mut entries = HashMap::with_capacity(raw.len());
        for (program_id, tests) in raw {
            let mut row = BTreeMap::new();
            for (key, value) in tests {
                let test_index: usize = key.parse().map_err(|_| ManifestError::BadIndex {
                    program_id: program_id.clone(),
                    key: key.clone(),
                })?;
                if !(value.is_finite() && value > 0.0) {
                    return Err(ManifestError::NonPositive {
                        program_id,
                        test_index,
                        value,
                    });
                }
                row.insert(test_index, value);
            }
            entries.insert(program_id, row);
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn insert(&mut self, program_id: impl Into<String>, test_index: usize, value: f64) {
        self.entries
            .entry(program_id.into())
            .or_default()
            .insert(test_index, value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl PerfBackend for ManifestBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "manifest".into(),
            deterministic: true,
            unit: Unit::CostUnits,
        }
    }

    fn measure(&self, req: &MeasureRequest<'_>) -> Result<PerfMeasurement, MeasurementError> {
        let value = self
            .entries
            .get(req.program_id)
            .and_then(|row| row.get(&req.test_index))
            .ok_or_else(|| MeasurementError::MissingEntry {
                program_id: req.program_id.to_string(),
                test_index: req.test_index,
            })?;
        Ok(PerfMeasurement::new(*value, Unit::CostUnits)?)
    }
}

// ---------------------------------------------------------------------------
// Simulator driver

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    /// Shell command with `{binary}`, `{input}` and `{stats_out}` placeholders.
    pub command: String,
    #[serde(default = "default_stats_key")]
    pub stats_key: String,
    #[serde(default = "default_sim_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

fn default_stats_key() -> String {
    "simSeconds".into()
}

fn default_sim_timeout() -> f64 {
    process::DEFAULT_WALL_TIMEOUT_S
}

fn default_max_parallel() -> usize {
    1
}

impl SimulatorConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            stats_key: default_stats_key(),
            timeout_s: default_sim_timeout(),
            max_parallel: default_max_parallel(),
        }
    }
}

/// Drives an external simulator (gem5 or anything that writes `key value`
/// stats lines) and reports one stat as [`Unit::SimSeconds`].
///
/// A typical gem5 template, run inside a container image that ships the
/// simulator and a Skylake configuration script:
///
/// ```text
/// docker run --rm -v /tmp:/tmp gem5-skylake \
///   gem5.opt --outdir=$(dirname {stats_out}) se_skylake.py --cmd {binary} --input {input} \
///   && cp $(dirname {stats_out})/stats.txt {stats_out}
/// ```
#[derive(Debug)]
pub struct SimulatorDriver {
    config: SimulatorConfig,
    slots: Semaphore,
}

impl SimulatorDriver {
    pub fn new(config: SimulatorConfig) -> Self {
        let slots = Semaphore::new(config.max_parallel);
        Self { config, slots }
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }
}

impl PerfBackend for SimulatorDriver {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "simulator".into(),
            deterministic: true,
            unit: Unit::SimSeconds,
        }
    }

    fn measure(&self, req: &MeasureRequest<'_>) -> Result<PerfMeasurement, MeasurementError> {
        let binary = req.artifact.ok_or(MeasurementError::MissingArtifact)?;
        let _slot = self.slots.acquire();

        let scratch = tempfile::tempdir()?;
        let input_path = scratch.path().join("input.txt");
        let stats_path = scratch.path().join("stats.txt");
        fs::write(&input_path, req.input)?;

        let script = process::expand(
            &self.config.command,
            &[
                ("binary", &process::shell_quote(&binary.to_string_lossy())),
                ("input", &process::shell_quote(&input_path.to_string_lossy())),
                ("stats_out", &process::shell_quote(&stats_path.to_string_lossy())),
            ],
        );
        let limits = Limits {
            wall_timeout_s: self.config.timeout_s,
            ..req.limits.clone()
        };
        let outcome = process::run(process::shell(&script), req.input, &limits)?;
        match outcome.exit {
            ExitKind::Exited(0) => {}
            ExitKind::TimedOut => return Err(MeasurementError::Timeout(limits.wall_timeout())),
            other => {
                return Err(MeasurementError::ProcessFailed {
                    status: other.to_string(),
                    stderr: String::from_utf8_lossy(&outcome.stderr).into_owned(),
                })
            }
        }

        let stats = fs::read_to_string(&stats_path).map_err(|_| {
            MeasurementError::StatsKeyMissing(self.config.stats_key.clone())
        })?;
        let value = parse_stats(&stats, &self.config.stats_key)?;
        Ok(PerfMeasurement::new(value, Unit::SimSeconds)?)
    }
}

/// Reads `key value [comment]` lines and returns the first value for `key`.
pub fn parse_stats(text: &str, key: &str) -> Result<f64, MeasurementError> {
    for line in text.lines() {
        let mut fields = line.split_whitespace();
        if fields.next() != Some(key) {
            continue;
        }
        let raw = fields.next().unwrap_or("");
        return match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(MeasurementError::StatsUnparsable {
                key: key.to_string(),
                raw: raw.to_string(),
            }),
        };
    }
    Err(MeasurementError::StatsKeyMissing(key.to_string()))
}

// ---------------------------------------------------------------------------
// Wall clock

/// Multiplicative lognormal noise, `LogNormal(0, sigma)`, drawn from a
/// ChaCha8 stream seeded with `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

/// Stateful sampler for a [`NoiseModel`]. Same seed, same sequence.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    rng: ChaCha8Rng,
    dist: Option<LogNormal<f64>>,
}

impl NoiseModel {
    pub fn sampler(&self) -> Result<NoiseSampler, PerfError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(PerfError::NonPositive(self.sigma));
        }
        let dist = if self.sigma == 0.0 {
            None
        } else {
            Some(LogNormal::new(0.0, self.sigma).map_err(|_| PerfError::NonPositive(self.sigma))?)
        };
        Ok(NoiseSampler {
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            dist,
        })
    }
}

impl NoiseSampler {
    pub fn next_factor(&mut self) -> f64 {
        match &self.dist {
            None => 1.0,
            Some(d) => d.sample(&mut self.rng),
        }
    }
}

#[derive(Debug)]
enum WallMode {
    Real,
    Simulated {
        base_cost: f64,
        sampler: Box<Mutex<NoiseSampler>>,
    },
}

/// Times processes with the host clock. Non-deterministic by nature; the
/// simulated mode exists to study what that noise does to speedup ratios.
#[derive(Debug)]
pub struct WallClockBackend {
    mode: WallMode,
}

impl WallClockBackend {
    pub fn real() -> Self {
        Self { mode: WallMode::Real }
    }

    /// No process is run; each call returns `base_cost × noise`.
    pub fn simulated(base_cost: f64, noise: NoiseModel) -> Result<Self, PerfError> {
        PerfMeasurement::new(base_cost, Unit::WallSeconds)?;
        Ok(Self {
            mode: WallMode::Simulated {
                base_cost,
                sampler: Box::new(Mutex::new(noise.sampler()?)),
            },
        })
    }
}

impl PerfBackend for WallClockBackend {
    fn descriptor(&self) -> BackendDescriptor {
        let name = match self.mode {
            WallMode::Real => "wallclock",
            WallMode::Simulated { .. } => "wallclock-simulated",
        };
        BackendDescriptor {
            name: name.into(),
            deterministic: false,
            unit: Unit::WallSeconds,
        }
    }

    fn measure(&self, req: &MeasureRequest<'_>) -> Result<PerfMeasurement, MeasurementError> {
        match &self.mode {
            WallMode::Simulated { base_cost, sampler } => {
                let factor = sampler.lock().unwrap_or_else(|e| e.into_inner()).next_factor();
                Ok(PerfMeasurement::new(base_cost * factor, Unit::WallSeconds)?)
            }
            WallMode::Real => {
                let binary = req.artifact.ok_or(MeasurementError::MissingArtifact)?;
                let cmd = std::process::Command::new(binary);
                let outcome = process::run(cmd, req.input, req.limits)?;
                match outcome.exit {
                    ExitKind::Exited(0) => {}
                    ExitKind::TimedOut => {
                        return Err(MeasurementError::Timeout(req.limits.wall_timeout()))
                    }
                    other => {
                        return Err(MeasurementError::ProcessFailed {
                            status: other.to_string(),
                            stderr: String::from_utf8_lossy(&outcome.stderr).into_owned(),
                        })
                    }
                }
                let secs = outcome.elapsed.as_secs_f64().max(1e-9);
                Ok(PerfMeasurement::new(secs, Unit::WallSeconds)?)
            }
        }
    }
}
