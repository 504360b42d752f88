//! Toolkit configuration file.
//!
//! JSON with a top-level `version`. Every section is optional and falls back
//! to its defaults; unknown keys are rejected with the key named in the
//! error. A file whose `version` differs from [`CONFIG_VERSION`] is refused.
//! Relative paths in a loaded file are taken relative to the file itself.
//!
//! ```json
//! {
//!   "version": 1,
//!   "paths": { "workdir": "work", "cache": "cache" },
//!   "compile": { "compiler_command": "g++ -std=c++17 {flags} {src} -o {out}", "flags": ["-O3"] },
//!   "backend": { "kind": "manifest", "path": "runtimes.json" },
//!   "seeds": { "split": 7 }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{SplitRatios, DEFAULT_DUPLICATE_RATIO, DEFAULT_MAX_PER_PROBLEM, DEFAULT_MIN_IMPROVEMENT};
use crate::gen::GenConfig;
use crate::harness::CompileConfig;
use crate::metrics::DEFAULT_OPT_MIN_IMPROVEMENT;
use crate::perf::{
    ManifestBackend, ManifestError, NoiseModel, PerfBackend, PerfError, SimulatorConfig, SimulatorDriver,
    WallClockBackend,
};
use crate::process::Limits;
use crate::selfplay::{DEFAULT_INPUT_BUDGET, DEFAULT_MAX_PER_CLASS, DEFAULT_MIN_SPEEDUP};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub version: u32,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub compile: CompileConfig,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub selfplay: SelfPlaySection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub gen: GenConfig,
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            paths: Paths::default(),
            compile: CompileConfig::default(),
            limits: Limits::default(),
            backend: BackendConfig::default(),
            thresholds: Thresholds::default(),
            dataset: DatasetSection::default(),
            retrieval: RetrievalSection::default(),
            selfplay: SelfPlaySection::default(),
            seeds: Seeds::default(),
            gen: GenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub tests: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

/// Which performance oracle to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Per-test costs from a JSON manifest.
    Manifest { path: PathBuf },
    Simulator(SimulatorConfig),
    /// Real wall-clock timing, or simulated timing when `base_cost` is set.
    WallClock {
        #[serde(default)]
        base_cost: Option<f64>,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::WallClock {
            base_cost: None,
            sigma: 0.0,
            seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn PerfBackend>, ConfigError> {
        Ok(match self {
            BackendConfig::Manifest { path } => Box::new(ManifestBackend::from_path(path)?),
            BackendConfig::Simulator(cfg) => Box::new(SimulatorDriver::new(cfg.clone())),
            BackendConfig::WallClock { base_cost: None, .. } => Box::new(WallClockBackend::real()),
            BackendConfig::WallClock {
                base_cost: Some(cost),
                sigma,
                seed,
            } => Box::new(WallClockBackend::simulated(
                *cost,
                NoiseModel {
                    sigma: *sigma,
                    seed: *seed,
                },
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Dataset pairs need relative improvement strictly above this.
    pub min_improvement: f64,
    /// A candidate counts toward %Opt at or above this.
    pub opt_min_improvement: f64,
    pub hq_max_per_problem: usize,
    pub duplicate_runtime_ratio: f64,
    pub selfplay_min_speedup: f64,
    pub selfplay_max_per_class: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_improvement: DEFAULT_MIN_IMPROVEMENT,
            opt_min_improvement: DEFAULT_OPT_MIN_IMPROVEMENT,
            hq_max_per_problem: DEFAULT_MAX_PER_PROBLEM,
            duplicate_runtime_ratio: DEFAULT_DUPLICATE_RATIO,
            selfplay_min_speedup: DEFAULT_MIN_SPEEDUP,
            selfplay_max_per_class: DEFAULT_MAX_PER_CLASS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub ratios: SplitRatios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub k: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            k: crate::adapt::retrieval::DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfPlaySection {
    pub input_budget: usize,
}

impl Default for SelfPlaySection {
    fn default() -> Self {
        Self {
            input_budget: DEFAULT_INPUT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub split: u64,
    pub noise: u64,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config is missing `version`")]
    MissingVersion,
    #[error("config version {found} is not supported (expected {CONFIG_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

impl ToolkitConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw
            .get("version")
            .ok_or(ConfigError::MissingVersion)?
            .as_u64()
            .ok_or(ConfigError::UnsupportedVersion { found: 0 })?;
        if version != u64::from(CONFIG_VERSION) {
            return Err(ConfigError::UnsupportedVersion { found: version });
        }
        let cfg: ToolkitConfig = serde_json::from_value(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    /// Makes every relative path in the config relative to `base`.
    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.paths.corpus,
            &mut self.paths.tests,
            &mut self.paths.workdir,
            &mut self.paths.cache,
            &mut self.gen.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let BackendConfig::Manifest { path } = &mut self.backend {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let t = &self.thresholds;
        if !(0.0..1.0).contains(&t.min_improvement) || !(0.0..1.0).contains(&t.opt_min_improvement) {
            return bad("improvement thresholds must be in [0, 1)");
        }
        if t.selfplay_min_speedup.is_nan() || t.selfplay_min_speedup < 1.0 {
            return bad("selfplay_min_speedup must be >= 1");
        }
        if t.hq_max_per_problem == 0 || t.selfplay_max_per_class == 0 {
            return bad("per-problem and per-class caps must be positive");
        }
        if self.retrieval.k == 0 {
            return bad("retrieval.k must be positive");
        }
        if self.limits.wall_timeout_s.is_nan() || self.limits.wall_timeout_s <= 0.0 {
            return bad("limits.wall_timeout_s must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ToolkitConfig::from_json_str(r#"{"version": 1}"#).unwrap();
        assert_eq!(cfg, ToolkitConfig::default());
        assert_eq!(cfg.retrieval.k, 2);
        assert_eq!(cfg.limits.wall_timeout_s, 120.0);
        assert_eq!(cfg.compile.flags, vec!["-O3"]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ToolkitConfig::from_json_str(r#"{"version": 1, "thresholds": {"min_improvment": 0.2}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("min_improvment"), "{err}");
        let err = ToolkitConfig::from_json_str(r#"{"version": 1, "colour": 1}"#).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn version_is_checked() {
        assert!(matches!(
            ToolkitConfig::from_json_str(r#"{"version": 2}"#),
            Err(ConfigError::UnsupportedVersion { found: 2 })
        ));
        assert!(matches!(ToolkitConfig::from_json_str("{}"), Err(ConfigError::MissingVersion)));
    }

    #[test]
    fn backend_variants_parse() {
        let cfg = ToolkitConfig::from_json_str(
            r#"{"version": 1, "backend": {"kind": "simulator", "command": "sim {binary} {input} {stats_out}"}}"#,
        )
        .unwrap();
        match &cfg.backend {
            BackendConfig::Simulator(s) => assert_eq!(s.stats_key, "simSeconds"),
            other => panic!("{other:?}"),
        }
        let cfg = ToolkitConfig::from_json_str(
            r#"{"version": 1, "backend": {"kind": "wall_clock", "base_cost": 1.0, "sigma": 0.3, "seed": 4}}"#,
        )
        .unwrap();
        assert!(!cfg.backend.build().unwrap().descriptor().deterministic);
        assert!(ToolkitConfig::from_json_str(r#"{"version": 1, "backend": {"kind": "manifest", "path": "x", "extra": 1}}"#).is_err());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"version": 1, "paths": {"tests": "t", "cache": "/abs"}, "backend": {"kind": "manifest", "path": "m.json"}}"#,
        )
        .unwrap();
        let cfg = ToolkitConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.tests, Some(dir.path().join("t")));
        assert_eq!(cfg.paths.cache, Some(PathBuf::from("/abs")));
        assert_eq!(cfg.backend, BackendConfig::Manifest { path: dir.path().join("m.json") });
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ToolkitConfig::from_json_str(r#"{"version": 1, "retrieval": {"k": 0}}"#).is_err());
        assert!(ToolkitConfig::from_json_str(r#"{"version": 1, "thresholds": {"min_improvement": 1.5}}"#).is_err());
    }
}
