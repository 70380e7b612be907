//! `regime-lab`: simulate, cluster, validate, score and sweep from JSON
//! configuration files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use regime_lab::Error;

#[derive(Parser)]
#[command(name = "regime-lab", version, about = "Market regime clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate regime-switching price paths.
    Simulate(#[command(flatten)] Args),
    /// Cluster a price stream into regimes.
    Cluster(#[command(flatten)] Args),
    /// Compute validation indexes and MMD self-similarity scores.
    Validate(#[command(flatten)] Args),
    /// Score clusterings against a regime schedule.
    Score(#[command(flatten)] Args),
    /// Score synthetic runs over a range of window lengths.
    Sweep(#[command(flatten)] Args),
}

#[derive(clap::Args, Clone, Debug)]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(value) = std::env::var("REGIME_LAB_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("REGIME_LAB_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let (name, outcome) = match configure_threads() {
        Err(e) => ("setup", Err(e)),
        Ok(()) => match &cli.command {
            Command::Simulate(a) => ("simulate", commands::simulate(&a.config, a.out.clone(), a.seed)),
            Command::Cluster(a) => ("cluster", commands::cluster(&a.config, a.out.clone(), a.seed)),
            Command::Validate(a) => ("validate", commands::validate(&a.config, a.out.clone(), a.seed)),
            Command::Score(a) => ("score", commands::score(&a.config, a.out.clone(), a.seed)),
            Command::Sweep(a) => ("sweep", commands::sweep(&a.config, a.out.clone(), a.seed)),
        },
    };
    match outcome {
        Ok(written) => {
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            eprintln!("{name} finished in {:.3?}", started.elapsed());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
