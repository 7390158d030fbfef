//! `gaussgp`: generate data, fit model families, and evaluate them on the
//! constrained-dynamics benchmarks.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure,
//! 4 some work items failed but partial results were written.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gauss_gp::systems::SystemName;
use gauss_gp::train::ModelFamily;

use crate::commands::Context;
use crate::config::{ExperimentConfig, Overrides, OUT_ENV};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "gaussgp", version, about = "Constrained-dynamics GP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample training datasets, one per run.
    Generate(Common),
    /// Fit every model family on every run's dataset.
    Fit(Common),
    /// Evaluate fitted models on the prediction grid.
    Report(Common),
    /// Roll out fitted models and the analytic ODE with RK45.
    Trajectory(Common),
    /// Condition on the source surface and predict on the transfer surface.
    Transfer(Common),
    /// Infer the unconstrained acceleration from at-rest observations.
    InferAbar(Common),
    /// Print the resolved configuration as JSON.
    ShowConfig(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $GAUSSGP_OUT, then ./results).
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Comma-separated model families, e.g. `se,gp2_fixed_parametric`.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long)]
    n_train: Option<usize>,
    /// Restarts for every family (overrides the 30/5 defaults).
    #[arg(long)]
    restarts: Option<usize>,
    /// Suppress the list of written files.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let system = self
            .system
            .as_deref()
            .map(str::parse::<SystemName>)
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let families = self
            .families
            .as_ref()
            .map(|v| v.iter().map(|s| s.parse::<ModelFamily>()).collect::<Result<Vec<_>, _>>())
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Overrides {
            system,
            runs: self.runs,
            seed: self.seed,
            out: self.out.clone(),
            families,
            n_train: self.n_train,
            restarts: self.restarts,
        })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Generate(c)
        | Command::Fit(c)
        | Command::Report(c)
        | Command::Trajectory(c)
        | Command::Transfer(c)
        | Command::InferAbar(c)
        | Command::ShowConfig(c) => c.clone(),
    };
    let cfg = ExperimentConfig::load(common.config.as_deref(), &common.overrides()?)?;
    if let Command::ShowConfig(_) = cli.command {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let ctx = Context::new(cfg)?;
    let written = match cli.command {
        Command::Generate(_) => commands::generate(&ctx),
        Command::Fit(_) => commands::fit(&ctx),
        Command::Report(_) => commands::report(&ctx),
        Command::Trajectory(_) => commands::trajectory(&ctx),
        Command::Transfer(_) => commands::transfer(&ctx),
        Command::InferAbar(_) => commands::infer_abar(&ctx),
        Command::ShowConfig(_) => unreachable!(),
    }?;
    if !common.quiet {
        for p in written {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaussgp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
