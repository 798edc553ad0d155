//! `parea`: solve, vary, verify and evaluate generalized area functionals.

mod commands;
mod config;
mod output;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::{load, VerifyConfig, DEFAULT_SEED};
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "parea", version, about = "Generalized area functionals on rectangular grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RNG seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy for given boundary data.
    Solve,
    /// First and second variation of a field along a direction.
    Vary,
    /// Run the seeded invariant suite.
    Verify,
    /// Area density of a graph.
    Area,
    /// Mean curvature of a graph.
    Curvature,
    /// Radon-Nikodym decomposition of a pair of vector measures.
    Decompose,
}

/// Result of a command that ran to completion.
pub enum Outcome {
    Pass,
    VerificationFailed,
    NotConverged,
}

fn required(config: Option<&Path>) -> Result<&Path> {
    config.context("this command needs --config <path>")
}

fn run_verify(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<Outcome> {
    let cfg: VerifyConfig = match config {
        Some(path) => load(path)?.0,
        None => VerifyConfig::default(),
    };
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let report = verify::run(seed, &cfg.thresholds)?;
    OutDir::create(out)?.json("verify.json", &report)?;
    for i in &report.invariants {
        let status = if i.pass { "pass" } else { "FAIL" };
        println!("{status} {} measured {:e} threshold {:e}", i.name, i.measured, i.threshold);
    }
    Ok(if report.all_pass { Outcome::Pass } else { Outcome::VerificationFailed })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Verify => run_verify(config, &cli.out, cli.seed),
        Command::Solve => required(config).and_then(|c| commands::solve(c, &cli.out, cli.seed)),
        Command::Vary => required(config).and_then(|c| commands::vary(c, &cli.out, cli.seed)),
        Command::Area => required(config).and_then(|c| commands::area(c, &cli.out, cli.seed)),
        Command::Curvature => required(config).and_then(|c| commands::curvature(c, &cli.out, cli.seed)),
        Command::Decompose => required(config).and_then(|c| commands::decompose_cmd(c, &cli.out, cli.seed)),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Ok(Outcome::NotConverged) => {
            eprintln!("solver did not converge; see the report");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
