use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fgp_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "fgp",
    version,
    about = "Functional Gaussian process regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulation scenario.
    Simulate(Common),
    /// Sample the covariance parameters.
    Fit(Common),
    /// Predict held-out realizations from saved draws.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Also export latent surfaces on a W x H grid.
        #[arg(long, num_args = 2, value_names = ["W", "H"])]
        grid: Option<Vec<usize>>,
    },
    /// Geographically weighted regression on the same files.
    Baseline(Common),
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.apply_overrides(c.seed, c.out.clone());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&load(&c)?),
        Command::Fit(c) => commands::fit(&load(&c)?),
        Command::Predict { common, grid } => {
            let grid = grid.map(|g| (g[0], g[1]));
            commands::predict(&load(&common)?, grid)
        }
        Command::Baseline(c) => commands::baseline(&load(&c)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
