use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use perfedit::config::{BackendConfig, ToolkitConfig};
use perfedit::harness::Harness;
use perfedit::perf::PerfBackend;
use tempfile::TempDir;

pub enum Outcome {
    Clean,
    WithRejects(usize),
}

pub struct Context {
    pub config: ToolkitConfig,
    pub jobs: usize,
}

impl Context {
    pub fn new(config: Option<&Path>, jobs: Option<usize>) -> Result<Self> {
        let config = match config {
            Some(path) => ToolkitConfig::load(path)?,
            None => ToolkitConfig::default(),
        };
        let jobs = jobs
            .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
            .unwrap_or(1)
            .max(1);
        Ok(Self { config, jobs })
    }

    /// One worker per harness; parallelism comes from running several
    /// programs at once, so `--jobs` bounds the total.
    pub fn harness(&self) -> Harness {
        Harness::new(self.config.compile.clone(), self.config.limits.clone())
    }

    /// The configured backend, or a manifest backend when `manifest` is given.
    pub fn backend(&self, manifest: Option<&Path>) -> Result<Box<dyn PerfBackend>> {
        let cfg = match manifest {
            Some(path) => BackendConfig::Manifest {
                path: path.to_path_buf(),
            },
            None => self.config.backend.clone(),
        };
        Ok(cfg.build()?)
    }

    pub fn workdir(&self, flag: Option<&Path>) -> Result<Workdir> {
        match flag.or(self.config.paths.workdir.as_deref()) {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                Ok(Workdir::Fixed(dir.to_path_buf()))
            }
            None => Ok(Workdir::Temp(tempfile::tempdir()?)),
        }
    }

    pub fn tests_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.config.paths.tests.clone())
            .context("no tests directory: pass --tests or set paths.tests in the config")
    }
}

pub enum Workdir {
    Fixed(PathBuf),
    Temp(TempDir),
}

impl Workdir {
    pub fn path(&self) -> &Path {
        match self {
            Workdir::Fixed(p) => p,
            Workdir::Temp(t) => t.path(),
        }
    }

    /// Replaces the workdir path in `text`, so messages stay identical
    /// across runs that use different scratch directories.
    pub fn scrub(&self, text: &str) -> String {
        text.replace(&*self.path().to_string_lossy(), "$WORKDIR")
    }
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    perfedit::util::read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    perfedit::util::write_jsonl(path, items).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    perfedit::util::write_json(path, value).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
