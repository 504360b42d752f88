mod audit;
mod common;
mod dataset;
mod eval;
mod index;
mod selfplay;
mod tags;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::{Context, Outcome};

/// Build performance-improving edit datasets, benchmark program pairs and
/// score code optimizers.
///
/// Exit status: 0 success, 2 success with rejected inputs, 1 failure.
#[derive(Debug, Parser)]
#[command(name = "perfedit", version)]
struct Cli {
    /// JSON config file. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Maximum number of worker processes.
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or filter pair datasets.
    #[command(subcommand)]
    Dataset(dataset::DatasetCmd),
    /// Generate or load candidates, judge and measure them, and report metrics.
    Eval(eval::EvalArgs),
    /// Measurement-variance audits.
    #[command(subcommand)]
    Audit(audit::AuditCmd),
    /// Behavioral dedup and assembly of synthetic pairs.
    #[command(subcommand)]
    Selfplay(selfplay::SelfplayCmd),
    /// Performance tags.
    #[command(subcommand)]
    Tags(tags::TagsCmd),
    /// Retrieval index over training pairs.
    #[command(subcommand)]
    Index(index::IndexCmd),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = Context::new(cli.config.as_deref(), cli.jobs).and_then(|ctx| match cli.command {
        Command::Dataset(cmd) => dataset::run(&ctx, cmd),
        Command::Eval(args) => eval::run(&ctx, args),
        Command::Audit(cmd) => audit::run(&ctx, cmd),
        Command::Selfplay(cmd) => selfplay::run(&ctx, cmd),
        Command::Tags(cmd) => tags::run(&ctx, cmd),
        Command::Index(cmd) => index::run(&ctx, cmd),
    });
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::WithRejects(n)) => {
            eprintln!("completed with {n} rejected input(s)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
