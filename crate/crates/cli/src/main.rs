//! `zrh`: simulate, couple, solve and compare.
//!
//! Exit codes: 0 when everything ran and every requested check passed, 1
//! when a check or comparison failed, 2 on usage or runtime errors.

mod common;
mod compare;
mod couple;
mod invariant;
mod oracle;
mod pde;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "zrh", version, about = "Zero-range processes with a destructive origin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replica-parallel particle simulation; block-averaged densities as CSV.
    Simulate(simulate::Args),
    /// Coupled dynamics: second-class particles, basic or labeled coupling.
    Couple(couple::Args),
    /// Build (and optionally validate) a stationary product measure.
    Invariant(invariant::Args),
    /// Godunov solution of the hydrodynamic equation with the origin condition.
    Pde(pde::Args),
    /// Closed-form, ODE and Monte Carlo oracles of the linear case.
    Oracle(oracle::Args),
    /// Compare empirical densities with a target (config or CSV files).
    Compare(compare::Args),
    /// Run every experiment of a suite file.
    Suite(compare::SuiteArgs),
}

/// Whether the requested checks passed.
pub type Outcome = anyhow::Result<bool>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = zrh_core::replicas::configure_threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Couple(a) => couple::run(a),
        Command::Invariant(a) => invariant::run(a),
        Command::Pde(a) => pde::run(a),
        Command::Oracle(a) => oracle::run(a),
        Command::Compare(a) => compare::run(a),
        Command::Suite(a) => compare::run_suite(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
