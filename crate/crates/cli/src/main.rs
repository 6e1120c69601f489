use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ssc_core::harness::{phase_diagram, run_pipeline, write_outputs, ExperimentConfig, RunSummary};

#[derive(Parser)]
#[command(name = "ssc", version, about = "Sparse subspace clustering on compressed data")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SSC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured grid and write results.csv, records.jsonl, run.json and timings.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `outputs`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the grid and also write the phase_*.csv aggregates.
    Phase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a config and print it with defaults filled in.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn report(summary: &RunSummary, out: &std::path::Path) -> ExitCode {
    eprintln!(
        "{} records written to {} ({} column solves failed)",
        summary.records.len(),
        out.display(),
        summary.solver_failures
    );
    ExitCode::from(summary.exit_code() as u8)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building thread pool")?;
    }
    match cli.command {
        Command::Run { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.outputs.clone());
            let summary = run_pipeline(&cfg)?;
            write_outputs(&cfg, &summary, &out)?;
            Ok(report(&summary, &out))
        }
        Command::Phase { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.outputs.clone());
            let (phase, summary) = phase_diagram(&cfg)?;
            write_outputs(&cfg, &summary, &out)?;
            phase.write(&out)?;
            Ok(report(&summary, &out))
        }
        Command::Check { config } => {
            let cfg = load(&config, None)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            eprintln!("ok: {} grid points x {} replicates", cfg.grid_size(), cfg.replicates);
            Ok(ExitCode::SUCCESS)
        }
    }
}
