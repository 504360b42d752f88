use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Subcommand, ValueEnum};
use perfedit::perf::{ManifestBackend, MeasureRequest, NoiseModel, PerfBackend, WallClockBackend};
use perfedit::variance::{audit_identical_pairs, calibrate_noise};

use crate::common::{self, Context, Outcome};

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    /// Measure one program against itself N times and report the ratios.
    Variance(VarianceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// A deterministic backend: the configured manifest or simulator when
    /// `--program` is given, otherwise a constant cost.
    Deterministic,
    /// Lognormal noise around a base cost.
    Simulated,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Number of identical pairs.
    #[arg(long)]
    pairs: usize,
    /// Noise sigma for simulated mode.
    #[arg(long, conflicts_with = "target_mean")]
    sigma: Option<f64>,
    /// Calibrate sigma so the expected mean ratio equals this.
    #[arg(long)]
    target_mean: Option<f64>,
    /// Noise seed (default: seeds.noise from the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    base_cost: f64,
    /// Also report statistics of the inverse ratios.
    #[arg(long)]
    both_directions: bool,
    /// Program id to look up in the configured deterministic backend.
    #[arg(long)]
    program: Option<String>,
    /// Compiled binary for simulator backends.
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Input file fed to the program.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    test_index: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write ratios.csv.
    #[arg(long)]
    csv: bool,
}

const CONSTANT_PROGRAM: &str = "constant";

pub fn run(ctx: &Context, cmd: AuditCmd) -> Result<Outcome> {
    let AuditCmd::Variance(args) = cmd;
    if args.pairs == 0 {
        bail!("--pairs must be at least 1");
    }
    if !(args.base_cost.is_finite() && args.base_cost > 0.0) {
        bail!("--base-cost must be positive");
    }
    let backend: Box<dyn PerfBackend> = match args.mode {
        Mode::Deterministic => {
            if args.sigma.is_some() || args.target_mean.is_some() {
                bail!("--sigma and --target-mean only apply to simulated mode");
            }
            match &args.program {
                Some(_) => {
                    let b = ctx.backend(None)?;
                    if !b.descriptor().deterministic {
                        bail!("the configured backend {:?} is not deterministic", b.descriptor().name);
                    }
                    b
                }
                None => {
                    let mut m = ManifestBackend::default();
                    m.insert(CONSTANT_PROGRAM, 0, args.base_cost);
                    Box::new(m)
                }
            }
        }
        Mode::Simulated => {
            let sigma = match (args.sigma, args.target_mean) {
                (Some(s), None) => s,
                (None, Some(t)) => calibrate_noise(t, 1e-9)?,
                (None, None) => bail!("simulated mode needs --sigma or --target-mean"),
                (Some(_), Some(_)) => unreachable!("clap rejects both"),
            };
            if !(sigma.is_finite() && sigma >= 0.0) {
                bail!("invalid sigma {sigma}: must be finite and non-negative");
            }
            let seed = args.seed.unwrap_or(ctx.config.seeds.noise);
            Box::new(WallClockBackend::simulated(args.base_cost, NoiseModel { sigma, seed })?)
        }
    };

    let input = match &args.input {
        Some(p) => fs::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let limits = ctx.config.limits.clone();
    let request = MeasureRequest {
        program_id: args.program.as_deref().unwrap_or(CONSTANT_PROGRAM),
        artifact: args.artifact.as_deref(),
        test_index: args.test_index.unwrap_or(0),
        input: &input,
        limits: &limits,
    };
    let audit = audit_identical_pairs(backend.as_ref(), &request, args.pairs, args.both_directions)?;

    common::create_out_dir(&args.out)?;
    common::write_json(&args.out.join("audit.json"), &audit.report)?;
    if args.csv {
        let path = args.out.join("ratios.csv");
        fs::write(&path, audit.ratios_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let r = &audit.report;
    eprintln!(
        "{} pairs: mean ratio {:.4}, std {:.4}, p95 {:.4}",
        r.n_pairs, r.mean_ratio, r.std_ratio, r.quantiles["0.95"]
    );
    Ok(if r.n_failed > 0 {
        Outcome::WithRejects(r.n_failed)
    } else {
        Outcome::Clean
    })
}
