//! `crosscorpus` command-line pipeline.
//!
//! Subcommands: `stats`, `similarity`, `tsne`, `train`, `eval-grid`,
//! `ensemble`, `synth`. All of them read a JSON config (`--config`) and
//! write reports into the configured output directory; `--seed` and
//! `--out` override the config, `--threads` caps the worker pool.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "crosscorpus", version, about = "Cross-corpus generalization toolkit")]
struct Cli {
    /// Run config JSON; for `synth`, a synthetic-spec JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-class message and word counts for every dataset.
    Stats,
    /// TFIDF cosine-similarity matrix and top-k terms per class-corpus.
    Similarity,
    /// 2D t-SNE projection of the top-k terms (needs an embedding file).
    Tsne,
    /// Train one linear classifier per dataset and save the models.
    Train,
    /// Evaluate every classifier on every dataset's test split.
    EvalGrid,
    /// Evaluate the configured ensemble strategies on every test split.
    Ensemble,
    /// Generate synthetic datasets plus a ready-to-run config.
    Synth,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();

    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("building the worker pool")?;
    }

    let config_path = match &cli.config {
        Some(path) => path.clone(),
        None => bail!("--config is required"),
    };

    match cli.command {
        Command::Synth => commands::synth(&config_path, cli.seed, cli.out.as_deref()),
        other => {
            let pipeline = commands::Pipeline::load(&config_path, cli.seed, cli.out)?;
            match other {
                Command::Stats => commands::stats(&pipeline),
                Command::Similarity => commands::similarity(&pipeline),
                Command::Tsne => commands::tsne(&pipeline),
                Command::Train => commands::train(&pipeline),
                Command::EvalGrid => commands::eval_grid(&pipeline),
                Command::Ensemble => commands::ensemble(&pipeline),
                Command::Synth => unreachable!(),
            }
        }
    }
}
