mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use output::Staging;

#[derive(Parser)]
#[command(name = "wmlab", version, about = "Audio watermark overwriting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured corpus as WAV files.
    GenCorpus(Common),
    /// Watermark every corpus clip with the owner scheme.
    Embed(Common),
    /// Run the owner detector over a WAV directory or the corpus.
    Detect(Common),
    /// Train a neural scheme and write its checkpoint and loss log.
    Train(Common),
    /// Run an overwriting attack at the configured tier.
    Attack(Common),
    /// Cross-scheme overwrite BER matrix.
    Matrix(Common),
    /// Recompute a report from a per-clip samples CSV.
    Report(Common),
    /// Answer oracle requests on stdin until EOF.
    ServeOracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tier: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

type Runner = fn(&ExperimentConfig, &Staging) -> Result<String>;

fn run(cli: Cli) -> Result<String> {
    let (name, common, runner): (&str, Common, Runner) = match cli.command {
        Command::GenCorpus(c) => ("gen-corpus", c, commands::gen_corpus),
        Command::Embed(c) => ("embed", c, commands::embed),
        Command::Detect(c) => ("detect", c, commands::detect),
        Command::Train(c) => ("train", c, commands::train),
        Command::Attack(c) => ("attack", c, commands::attack),
        Command::Matrix(c) => ("matrix", c, commands::matrix),
        Command::Report(c) => ("report", c, commands::report),
        Command::ServeOracle(c) => ("serve-oracle", c, commands::serve_oracle),
    };
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let overrides = Overrides {
        out: common.out,
        seed: common.seed,
        tier: common.tier,
        budget: common.budget,
    };
    let cfg = ExperimentConfig::load(&common.config, &overrides)?;
    let staging = Staging::new(cfg.out_dir())?;
    let summary = runner(&cfg, &staging)?;
    let dir = staging.commit(&cfg, name)?;
    Ok(format!("{name}: {summary} -> {}", dir.display()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
