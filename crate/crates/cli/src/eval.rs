use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::Args;
use perfedit::adapt::prompts::{build_prompt, PromptError, PromptStyle, TEMPLATE_VERSION};
use perfedit::adapt::retrieval::{EmbeddingIndex, TfIdf};
use perfedit::adapt::tags::PerfTag;
use perfedit::dataset::{ProgramPair, Split};
use perfedit::gen::{extract_program, GenClient, GenRequest, DEFAULT_TEMPERATURE};
use perfedit::harness::{judge, load_suite, Judgement, TestCase};
use perfedit::metrics::{aggregate, aggregate_by_problem, evaluate_row, Candidate, EvalRow};
use perfedit::util::parallel_map;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{self, Context, Outcome};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// pairs.jsonl from `dataset build`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// instruction, few-shot, cot, retrieval or conditioned.
    #[arg(long, default_value = "instruction")]
    style: PromptStyle,
    /// Candidates per example (Best@k).
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Offline mode: JSONL of `{example_id, sample_index, code}` with an
    /// optional `program_id`.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    tests: Option<PathBuf>,
    /// Per-test runtime manifest; overrides the configured backend.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Few-shot / retrieved examples per prompt (default: retrieval.k).
    #[arg(long)]
    examples: Option<usize>,
    /// Prompts above this rough token count drop examples, then fail.
    #[arg(long, default_value_t = 8000)]
    max_prompt_tokens: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OfflineCandidate {
    example_id: String,
    sample_index: usize,
    code: String,
    #[serde(default)]
    program_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct Generation {
    example_id: String,
    sample_index: usize,
    prompt_tokens: usize,
    raw: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    extraction_error: Option<String>,
}

/// One program to judge: `None` code means it is already known to be
/// incorrect (empty extraction).
struct Job {
    example: usize,
    sample_index: usize,
    program_id: String,
    code: Option<String>,
}

pub fn run(ctx: &Context, args: EvalArgs) -> Result<Outcome> {
    anyhow::ensure!(args.k > 0, "--k must be positive");
    let all: Vec<ProgramPair> = common::read_jsonl(&args.pairs)?;
    let examples: Vec<&ProgramPair> = all.iter().filter(|p| p.split == args.split).collect();
    if examples.is_empty() {
        bail!("no pairs in split {:?} of {}", args.split, args.pairs.display());
    }
    let tests = ctx.tests_dir(args.tests.clone())?;

    let (jobs, generations, mode) = match &args.candidates {
        Some(path) => (offline_jobs(path, &examples, args.k)?, Vec::new(), "offline"),
        None => {
            let (jobs, gens) = online_jobs(ctx, &args, &all, &examples)?;
            (jobs, gens, "online")
        }
    };

    let mut suites: BTreeMap<&str, Vec<TestCase>> = BTreeMap::new();
    for ex in &examples {
        if !suites.contains_key(ex.problem_id.as_str()) {
            let suite = load_suite(&tests, &ex.problem_id)?;
            suites.insert(&ex.problem_id, suite);
        }
    }

    let backend = ctx.backend(args.manifest.as_deref())?;
    let workdir = ctx.workdir(args.workdir.as_deref())?;
    let harness = ctx.harness();
    let judged = parallel_map(&jobs, ctx.jobs, |job| {
        let Some(code) = &job.code else {
            return Candidate::incorrect(job.sample_index);
        };
        let suite = &suites[examples[job.example].problem_id.as_str()];
        let report = harness.evaluate(&job.program_id, code, suite, backend.as_ref(), workdir.path());
        match (judge(&report), report.total_runtime) {
            (Judgement::Correct, Some(rt)) => Candidate::correct(job.sample_index, rt),
            _ => {
                log::info!(
                    "{}: {}",
                    job.program_id,
                    report.failure_reason().unwrap_or_default()
                );
                Candidate::incorrect(job.sample_index)
            }
        }
    });

    let mut per_example: Vec<Vec<Candidate>> = vec![Vec::new(); examples.len()];
    for (job, cand) in jobs.iter().zip(judged) {
        per_example[job.example].push(cand);
    }
    let min_improvement = ctx.config.thresholds.opt_min_improvement;
    let rows: Vec<EvalRow> = examples
        .iter()
        .zip(per_example)
        .map(|(ex, mut cands)| {
            cands.sort_by_key(|c| c.sample_index);
            let mut row = evaluate_row(&ex.pair_id, ex.src_runtime, &cands, Some(args.k), min_improvement);
            row.problem_id = Some(ex.problem_id.clone());
            row
        })
        .collect();

    let summary = aggregate(&rows, args.k)?;
    let by_problem = aggregate_by_problem(&rows, args.k)?;
    common::create_out_dir(&args.out)?;
    common::write_jsonl(&args.out.join("eval_rows.jsonl"), &rows)?;
    if !generations.is_empty() {
        common::write_jsonl(&args.out.join("generations.jsonl"), &generations)?;
    }
    let config_echo = json!({
        "mode": mode,
        "split": args.split,
        "style": args.style,
        "k": args.k,
        "opt_min_improvement": min_improvement,
        "template_version": TEMPLATE_VERSION,
        "temperature": if mode == "online" { json!(args.temperature) } else { json!(null) },
        "backend": backend.descriptor(),
    });
    common::write_json(
        &args.out.join("summary.json"),
        &json!({ "config": config_echo, "summary": summary, "by_problem": by_problem }),
    )?;
    eprintln!(
        "{} examples: %Opt {:.4}, mean speedup {:.4}, %Correct {:.4}",
        summary.n_rows, summary.pct_opt, summary.mean_speedup, summary.pct_correct
    );
    Ok(Outcome::Clean)
}

fn offline_jobs(path: &std::path::Path, examples: &[&ProgramPair], k: usize) -> Result<Vec<Job>> {
    let cands: Vec<OfflineCandidate> = common::read_jsonl(path)?;
    let index: BTreeMap<&str, usize> = examples
        .iter()
        .enumerate()
        .map(|(i, e)| (e.pair_id.as_str(), i))
        .collect();
    let mut jobs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for c in cands {
        let Some(&example) = index.get(c.example_id.as_str()) else {
            continue;
        };
        if c.sample_index >= k {
            continue;
        }
        anyhow::ensure!(
            seen.insert((c.example_id.clone(), c.sample_index)),
            "duplicate candidate {} sample {}",
            c.example_id,
            c.sample_index
        );
        jobs.push(Job {
            example,
            sample_index: c.sample_index,
            program_id: c
                .program_id
                .unwrap_or_else(|| format!("{}.{}", c.example_id, c.sample_index)),
            code: Some(c.code),
        });
    }
    jobs.sort_by_key(|j| (j.example, j.sample_index));
    Ok(jobs)
}

fn online_jobs(
    ctx: &Context,
    args: &EvalArgs,
    all: &[ProgramPair],
    examples: &[&ProgramPair],
) -> Result<(Vec<Job>, Vec<Generation>)> {
    let mut gen_cfg = ctx.config.gen.clone();
    if gen_cfg.cache_dir.is_none() {
        gen_cfg.cache_dir = ctx.config.paths.cache.clone();
    }
    if gen_cfg.endpoint.is_none() && gen_cfg.cache_dir.is_none() {
        bail!("no --candidates file and no generation endpoint or cache configured");
    }
    let client = GenClient::new(gen_cfg)?;

    let train: Vec<&ProgramPair> = all.iter().filter(|p| p.split == Split::Train).collect();
    let n_examples = args.examples.unwrap_or(ctx.config.retrieval.k);
    let retrieval = if args.style == PromptStyle::Retrieval {
        anyhow::ensure!(!train.is_empty(), "retrieval prompts need training pairs");
        let docs: Vec<&str> = train.iter().map(|p| p.src.as_str()).collect();
        let tfidf = TfIdf::fit(&docs);
        let items: Vec<(String, String)> = train.iter().map(|p| (p.pair_id.clone(), p.src.clone())).collect();
        let index = EmbeddingIndex::build(&tfidf, &items);
        Some((tfidf, index))
    } else {
        None
    };
    let by_id: BTreeMap<&str, &ProgramPair> = train.iter().map(|p| (p.pair_id.as_str(), *p)).collect();
    // Few-shot uses the same fixed examples for every query.
    let mut fixed: Vec<ProgramPair> = train.iter().map(|p| (*p).clone()).collect();
    fixed.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    fixed.truncate(n_examples);

    let prompts: Vec<String> = examples
        .iter()
        .map(|ex| {
            let shots: Vec<ProgramPair> = match (&args.style, &retrieval) {
                (PromptStyle::Retrieval, Some((tfidf, index))) => index
                    .query(tfidf, &ex.src, n_examples)?
                    .into_iter()
                    .map(|h| by_id[h.id.as_str()].clone())
                    .collect(),
                (PromptStyle::FewShot | PromptStyle::ChainOfThought, _) => fixed.clone(),
                _ => Vec::new(),
            };
            fit_prompt(args.style, shots, &ex.src, args.max_prompt_tokens)
        })
        .collect::<Result<_>>()?;

    let responses = parallel_map(&prompts, ctx.jobs, |prompt| {
        let mut req = GenRequest::new(prompt.clone(), args.k);
        req.temperature = args.temperature;
        client.generate(&req)
    });

    let mut jobs = Vec::new();
    let mut gens = Vec::new();
    for (i, (ex, resp)) in examples.iter().zip(responses).enumerate() {
        let resp = resp.with_context(|| format!("generating for {}", ex.pair_id))?;
        for (s, raw) in resp.samples.into_iter().enumerate() {
            let extracted = extract_program(&raw);
            gens.push(Generation {
                example_id: ex.pair_id.clone(),
                sample_index: s,
                prompt_tokens: perfedit::adapt::prompts::approx_tokens(&prompts[i]),
                raw,
                extraction_error: extracted.as_ref().err().map(ToString::to_string),
            });
            jobs.push(Job {
                example: i,
                sample_index: s,
                program_id: format!("{}.{}", ex.pair_id, s),
                code: extracted.ok(),
            });
        }
    }
    Ok((jobs, gens))
}

/// Builds the prompt, dropping trailing examples until it fits the budget.
fn fit_prompt(style: PromptStyle, mut shots: Vec<ProgramPair>, query: &str, budget: usize) -> Result<String> {
    loop {
        let prompt = build_prompt(style, &shots, query, Some(PerfTag::TOP))?;
        match prompt.check_budget(budget) {
            Ok(()) => return Ok(prompt.text),
            Err(e @ PromptError::TooLong { .. }) if shots.len() <= 1 => return Err(e.into()),
            Err(_) => {
                shots.pop();
            }
        }
    }
}
