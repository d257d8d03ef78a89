//! `gradflow`: config-driven runs of the spectral-Galerkin solver.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, Purpose};

#[derive(Parser)]
#[command(name = "gradflow", version, about = "Stochastic gradient flows on (0,1) by spectral Galerkin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths and write one CSV per path.
    Simulate(Common),
    /// Run the assumption checkers and write one report per assumption.
    Check(Common),
    /// Run the Monte Carlo estimators listed under [estimate].
    Estimate(Common),
    /// Tabulate weighted projections of the initial data.
    ProjectionStudy(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: String,
    /// Master seed; overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; the GRADFLOW_OUT environment variable takes
    /// precedence.
    #[arg(long)]
    out: Option<String>,
    /// Override a configuration key, e.g. `--set scheme.dt=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn run(cli: Cli) -> Result<()> {
    let (purpose, common) = match cli.command {
        Command::Simulate(c) => (Purpose::Simulate, c),
        Command::Check(c) => (Purpose::Check, c),
        Command::Estimate(c) => (Purpose::Estimate, c),
        Command::ProjectionStudy(c) => (Purpose::ProjectionStudy, c),
    };
    let overrides = Overrides {
        seed: common.seed,
        workers: common.workers,
        out: std::env::var("GRADFLOW_OUT").ok().filter(|s| !s.is_empty()).or(common.out),
        set: common.set,
    };
    let mut table = config::read_table(&common.config)?;
    config::apply_overrides(&mut table, &overrides)?;
    let exp = config::validate(table, purpose)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = exp.run.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build()?;
    pool.install(|| commands::dispatch(purpose, &exp))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
