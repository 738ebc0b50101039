//! Batch experiment driver: exact-identity verification, order-parameter
//! estimation, tortuosity diagnostics, surface-tension comparisons, and
//! decay fitting. Exit codes: 0 pass, 1 check failure, 2 usage/config error.

use clap::{Parser, Subcommand};
use rfim_cli::commands;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rfim",
    version,
    about = "Disagreement-percolation laboratory for the 2D random-field Ising model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact-identity verification suite.
    Verify(commands::verify::VerifyArgs),
    /// Estimate the order parameter m(L) by Monte Carlo.
    #[command(name = "mL")]
    Ml(commands::ml::MlArgs),
    /// Annulus-crossing and lasso statistics per scale.
    Tortuosity(commands::tortuosity::TortuosityArgs),
    /// Exact vs integral surface tension with anti-concentration report.
    #[command(name = "surface-tension")]
    SurfaceTension(commands::surface_tension::SurfaceTensionArgs),
    /// Exponential-decay fit of an mL results table.
    Fit(commands::fit::FitArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => commands::verify::run(args),
        Command::Ml(args) => commands::ml::run(args),
        Command::Tortuosity(args) => commands::tortuosity::run(args),
        Command::SurfaceTension(args) => commands::surface_tension::run(args),
        Command::Fit(args) => commands::fit::run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
