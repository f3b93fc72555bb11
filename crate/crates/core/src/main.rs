use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pivotal::cli::{self, Experiment, ExperimentConfig};
use pivotal::Error;

/// Thread count of the worker pool; unset means one per core.
const THREADS_VAR: &str = "PIVOTAL_THREADS";

#[derive(Parser)]
#[command(
    name = "pivotal",
    version,
    about = "Conformal prediction experiments with a PIT correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Base versus corrected regions for three (score, α) pairs.
    Toy(Common),
    /// L¹ coverage gap against training-set size.
    Convergence(Common),
    /// KS distance between conditional and marginal score CDFs.
    IllustrationKs(Common),
    /// Monte-Carlo marginal coverage against the theoretical bracket.
    MarginalCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pivotal: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, Error> {
    configure_threads()?;
    let (experiment, common) = match cli.command {
        Command::Toy(c) => (Experiment::Toy, c),
        Command::Convergence(c) => (Experiment::Convergence, c),
        Command::IllustrationKs(c) => (Experiment::IllustrationKs, c),
        Command::MarginalCheck(c) => (Experiment::MarginalCheck, c),
    };
    let mut config = ExperimentConfig::load(&common.config, experiment)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = common.out {
        config.out = out;
    }
    cli::run(&config)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| cli::config::config_error(THREADS_VAR, format!("`{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| cli::config::config_error(THREADS_VAR, e.to_string()))
}
