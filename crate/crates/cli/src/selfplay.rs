use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::{Args, Subcommand};
use perfedit::harness::load_suite;
use perfedit::selfplay::{
    assemble_synthetic_pairs, compute_signatures, group_equivalence, novelty_filter, shared_input_set,
    EquivalenceClass, OutputSignature, SyntheticCandidate,
};
use serde::Deserialize;

use crate::common::{self, Context, Outcome};

#[derive(Debug, Subcommand)]
pub enum SelfplayCmd {
    /// Compute output signatures and group programs into equivalence classes.
    Dedupe(DedupeArgs),
    /// Filter optimized candidates into synthetic pairs.
    Assemble(AssembleArgs),
}

#[derive(Debug, Args)]
pub struct DedupeArgs {
    /// JSONL of `{program_id, problem_id, code}`.
    #[arg(long)]
    programs: PathBuf,
    /// Test suites whose inputs form the shared input set.
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// signatures.jsonl of known programs; writes novel.jsonl with the
    /// programs that behave unlike all of them.
    #[arg(long)]
    known: Option<PathBuf>,
    /// Maximum shared inputs (default: selfplay.input_budget).
    #[arg(long)]
    input_budget: Option<usize>,
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// JSONL of judged-correct (slow, fast) candidates with runtimes.
    #[arg(long)]
    candidates: PathBuf,
    /// classes.json from `selfplay dedupe`.
    #[arg(long)]
    classes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_speedup: Option<f64>,
    #[arg(long)]
    max_per_class: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratedProgram {
    program_id: String,
    problem_id: String,
    code: String,
}

pub fn run(ctx: &Context, cmd: SelfplayCmd) -> Result<Outcome> {
    match cmd {
        SelfplayCmd::Dedupe(args) => dedupe(ctx, args),
        SelfplayCmd::Assemble(args) => assemble(ctx, args),
    }
}

fn dedupe(ctx: &Context, args: DedupeArgs) -> Result<Outcome> {
    let programs: Vec<GeneratedProgram> = common::read_jsonl(&args.programs)?;
    let tests = ctx.tests_dir(args.tests)?;
    let problems: BTreeSet<&str> = programs.iter().map(|p| p.problem_id.as_str()).collect();
    let suites = problems
        .iter()
        .map(|p| load_suite(&tests, p))
        .collect::<Result<Vec<_>, _>>()?;
    let budget = args.input_budget.unwrap_or(ctx.config.selfplay.input_budget);
    let inputs = shared_input_set(&suites, budget);

    let workdir = ctx.workdir(args.workdir.as_deref())?;
    let sources: Vec<(String, String)> = programs
        .iter()
        .map(|p| (p.program_id.clone(), p.code.clone()))
        .collect();
    let harness = ctx.harness();
    let signatures = if programs.is_empty() {
        Vec::new()
    } else {
        compute_signatures(&sources, &inputs, &harness, workdir.path(), ctx.jobs)?
    };
    let classes = group_equivalence(&signatures);

    common::create_out_dir(&args.out)?;
    common::write_jsonl(&args.out.join("signatures.jsonl"), &signatures)?;
    common::write_json(&args.out.join("classes.json"), &classes)?;
    if let Some(known_path) = &args.known {
        let known: Vec<OutputSignature> = common::read_jsonl(known_path)?;
        let novel = novelty_filter(&signatures, &known)
            .with_context(|| format!("comparing against {}", known_path.display()))?;
        let ids: Vec<&str> = novel.iter().map(|s| s.program_id.as_str()).collect();
        common::write_jsonl(&args.out.join("novel.jsonl"), &ids)?;
        eprintln!("{} of {} programs are novel", ids.len(), signatures.len());
    }
    eprintln!(
        "{} programs, {} shared inputs, {} classes",
        signatures.len(),
        inputs.len(),
        classes.len()
    );
    Ok(Outcome::Clean)
}

fn assemble(ctx: &Context, args: AssembleArgs) -> Result<Outcome> {
    let candidates: Vec<SyntheticCandidate> = common::read_jsonl(&args.candidates)?;
    let classes: Vec<EquivalenceClass> = common::read_json(&args.classes)?;
    let t = &ctx.config.thresholds;
    let pairs = assemble_synthetic_pairs(
        &candidates,
        &classes,
        args.min_speedup.unwrap_or(t.selfplay_min_speedup),
        args.max_per_class.unwrap_or(t.selfplay_max_per_class),
    )?;
    common::create_out_dir(&args.out)?;
    common::write_jsonl(&args.out.join("synthetic_pairs.jsonl"), &pairs)?;
    eprintln!("kept {} of {} candidates", pairs.len(), candidates.len());
    Ok(Outcome::Clean)
}
