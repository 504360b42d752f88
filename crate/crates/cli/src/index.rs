use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::{Args, Subcommand};
use perfedit::adapt::retrieval::{EmbeddingIndex, TfIdf};
use perfedit::dataset::{ProgramPair, Split};

use crate::common::{self, Context, Outcome};

#[derive(Debug, Subcommand)]
pub enum IndexCmd {
    /// Fit tf-idf on the slow programs of a split and write index.bin + index.json.
    Build(BuildArgs),
    /// Print the K nearest pairs to a program as JSON lines.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value = "train")]
    split: Split,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Directory written by `index build`.
    #[arg(long)]
    index: PathBuf,
    /// File holding the query program.
    #[arg(long, conflicts_with = "query")]
    query_file: Option<PathBuf>,
    /// Query program text.
    #[arg(long)]
    query: Option<String>,
    /// Neighbors to return (default: retrieval.k).
    #[arg(long)]
    k: Option<usize>,
    /// Write hits here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(ctx: &Context, cmd: IndexCmd) -> Result<Outcome> {
    match cmd {
        IndexCmd::Build(args) => build(args),
        IndexCmd::Query(args) => query(ctx, args),
    }
}

fn paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("index.bin"), dir.join("index.json"))
}

fn build(args: BuildArgs) -> Result<Outcome> {
    let pairs: Vec<ProgramPair> = common::read_jsonl(&args.pairs)?;
    let items: Vec<(String, String)> = pairs
        .iter()
        .filter(|p| p.split == args.split)
        .map(|p| (p.pair_id.clone(), p.src.clone()))
        .collect();
    anyhow::ensure!(!items.is_empty(), "no pairs in split {:?}", args.split);
    let docs: Vec<&str> = items.iter().map(|(_, s)| s.as_str()).collect();
    let tfidf = TfIdf::fit(&docs);
    let index = EmbeddingIndex::build(&tfidf, &items);
    common::create_out_dir(&args.out)?;
    let (bin, sidecar) = paths(&args.out);
    index.save(&bin, &sidecar, &tfidf)?;
    eprintln!("indexed {} pairs, {} terms", index.len(), index.dim);
    Ok(Outcome::Clean)
}

fn query(ctx: &Context, args: QueryArgs) -> Result<Outcome> {
    let text = match (&args.query_file, &args.query) {
        (Some(p), _) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(q)) => q.clone(),
        (None, None) => anyhow::bail!("pass --query or --query-file"),
    };
    let (bin, sidecar) = paths(&args.index);
    let (index, state) = EmbeddingIndex::load(&bin, &sidecar)?;
    let tfidf: TfIdf = serde_json::from_value(state).context("index.json vectorizer state")?;
    let hits = index.query(&tfidf, &text, args.k.unwrap_or(ctx.config.retrieval.k))?;
    match &args.out {
        Some(path) => common::write_jsonl(path, &hits)?,
        None => {
            for h in &hits {
                println!("{}", serde_json::to_string(h)?);
            }
        }
    }
    Ok(Outcome::Clean)
}
