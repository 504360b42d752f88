use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::{Args, Subcommand};
use perfedit::dataset::{
    audit_duplicate_runtime_inconsistency, build_dataset, build_hq_subset, parse_submissions, BuildOptions,
    ProgramPair, SplitRatios,
};
use perfedit::harness::load_suite;
use serde::Deserialize;

use crate::common::{self, Context, Outcome};

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Submissions JSONL to pairs.jsonl, splits.json and rejects.jsonl.
    Build(BuildArgs),
    /// Keep at most N pairs per problem.
    HqSubset(HqArgs),
    /// Flag byte-identical programs whose reported runtimes disagree.
    Duplicates(DuplicatesArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// JSONL submission log.
    #[arg(long)]
    submissions: PathBuf,
    /// Directory with `<problem_id>/input.<k>.txt` and `output.<k>.txt`.
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Split seed (default: seeds.split from the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Train,val,test fractions, e.g. `0.8,0.1,0.1`.
    #[arg(long)]
    ratios: Option<SplitRatios>,
    /// Keep pairs whose relative improvement is strictly above this.
    #[arg(long)]
    min_improvement: Option<f64>,
    /// Per-test runtime manifest; overrides the configured backend.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Base for `code_path` entries (default: the submissions file's directory).
    #[arg(long)]
    code_root: Option<PathBuf>,
    /// Scratch directory for compiled programs.
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HqArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_per_problem: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DuplicatesArgs {
    #[arg(long)]
    submissions: PathBuf,
    /// JSONL of `{"submission_id": ..., "runtime": ...}` as reported by the judge.
    #[arg(long)]
    reported: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flag groups whose max/min runtime ratio exceeds this.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    code_root: Option<PathBuf>,
}

pub fn run(ctx: &Context, cmd: DatasetCmd) -> Result<Outcome> {
    match cmd {
        DatasetCmd::Build(args) => build(ctx, args),
        DatasetCmd::HqSubset(args) => hq(ctx, args),
        DatasetCmd::Duplicates(args) => duplicates(ctx, args),
    }
}

fn read_submissions(path: &Path, code_root: Option<PathBuf>) -> Result<(String, PathBuf)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading submissions {}", path.display()))?;
    let root = code_root.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    Ok((text, root))
}

fn build(ctx: &Context, args: BuildArgs) -> Result<Outcome> {
    let (text, root) = read_submissions(&args.submissions, args.code_root)?;
    let tests = ctx.tests_dir(args.tests)?;
    if !tests.is_dir() {
        anyhow::bail!("tests directory {} does not exist", tests.display());
    }
    let (subs, mut rejects) = parse_submissions(&text, &root);
    let opts = BuildOptions {
        min_improvement: args.min_improvement.unwrap_or(ctx.config.thresholds.min_improvement),
        ratios: args.ratios.unwrap_or(ctx.config.dataset.ratios),
        seed: args.seed.unwrap_or(ctx.config.seeds.split),
        workers: ctx.jobs,
    };
    let backend = ctx.backend(args.manifest.as_deref())?;
    let workdir = ctx.workdir(args.workdir.as_deref())?;
    let harness = ctx.harness();
    let out = build_dataset(
        &subs,
        |problem| load_suite(&tests, problem),
        &harness,
        backend.as_ref(),
        workdir.path(),
        &opts,
    )?;
    rejects.extend(out.rejects);
    for r in &mut rejects {
        r.reason = workdir.scrub(&r.reason);
    }

    common::create_out_dir(&args.out)?;
    common::write_jsonl(&args.out.join("pairs.jsonl"), &out.pairs)?;
    common::write_json(&args.out.join("splits.json"), &out.splits)?;
    common::write_jsonl(&args.out.join("rejects.jsonl"), &rejects)?;
    eprintln!(
        "{} submissions, {} pairs over {} problems",
        subs.len(),
        out.pairs.len(),
        out.splits.assignments.len()
    );
    Ok(if rejects.is_empty() {
        Outcome::Clean
    } else {
        Outcome::WithRejects(rejects.len())
    })
}

fn hq(ctx: &Context, args: HqArgs) -> Result<Outcome> {
    let pairs: Vec<ProgramPair> = common::read_jsonl(&args.pairs)?;
    let cap = args.max_per_problem.unwrap_or(ctx.config.thresholds.hq_max_per_problem);
    anyhow::ensure!(cap > 0, "--max-per-problem must be positive");
    let subset = build_hq_subset(&pairs, cap);
    common::write_jsonl(&args.out, &subset)?;
    eprintln!("kept {} of {} pairs", subset.len(), pairs.len());
    Ok(Outcome::Clean)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reported {
    submission_id: String,
    runtime: f64,
}

fn duplicates(ctx: &Context, args: DuplicatesArgs) -> Result<Outcome> {
    let (text, root) = read_submissions(&args.submissions, args.code_root)?;
    let (subs, rejects) = parse_submissions(&text, &root);
    let reported: Vec<Reported> = common::read_jsonl(&args.reported)?;
    let reported: HashMap<String, f64> = reported.into_iter().map(|r| (r.submission_id, r.runtime)).collect();
    let ratio = args.ratio.unwrap_or(ctx.config.thresholds.duplicate_runtime_ratio);
    let groups = audit_duplicate_runtime_inconsistency(&subs, &reported, ratio);
    common::write_json(&args.out, &groups)?;
    eprintln!("{} inconsistent duplicate group(s)", groups.len());
    Ok(if rejects.is_empty() {
        Outcome::Clean
    } else {
        Outcome::WithRejects(rejects.len())
    })
}
