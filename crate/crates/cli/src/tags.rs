use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use perfedit::adapt::tags::{assign_perf_tags, PerfTag};
use serde::{Deserialize, Serialize};

use crate::common::{self, Context, Outcome};

#[derive(Debug, Subcommand)]
pub enum TagsCmd {
    /// Assign per-problem decile tags from solution runtimes.
    Assign(AssignArgs),
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// JSONL of `{problem_id, solution_id, runtime}`.
    #[arg(long)]
    runtimes: PathBuf,
    /// Output JSONL; each input row plus `tag` and `label`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuntimeRow {
    problem_id: String,
    solution_id: String,
    runtime: f64,
}

#[derive(Debug, Serialize)]
struct TagRow<'a> {
    problem_id: &'a str,
    solution_id: &'a str,
    runtime: f64,
    tag: PerfTag,
    label: String,
}

pub fn run(_ctx: &Context, cmd: TagsCmd) -> Result<Outcome> {
    let TagsCmd::Assign(args) = cmd;
    let rows: Vec<RuntimeRow> = common::read_jsonl(&args.runtimes)?;
    let mut seen = BTreeSet::new();
    let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for r in &rows {
        if !seen.insert(r.solution_id.as_str()) {
            bail!("solution id {:?} appears more than once", r.solution_id);
        }
        if !(r.runtime.is_finite() && r.runtime > 0.0) {
            bail!("solution {:?} has non-positive runtime {}", r.solution_id, r.runtime);
        }
        grouped
            .entry(r.problem_id.clone())
            .or_default()
            .push((r.solution_id.clone(), r.runtime));
    }
    let tags = assign_perf_tags(&grouped);
    let out: Vec<TagRow> = rows
        .iter()
        .map(|r| {
            let tag = tags[&r.solution_id];
            TagRow {
                problem_id: &r.problem_id,
                solution_id: &r.solution_id,
                runtime: r.runtime,
                tag,
                label: tag.to_string(),
            }
        })
        .collect();
    common::write_jsonl(&args.out, &out)?;
    eprintln!("tagged {} solutions across {} problems", out.len(), grouped.len());
    Ok(Outcome::Clean)
}
