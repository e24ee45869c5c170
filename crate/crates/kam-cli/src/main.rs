//! `kam`: reduce, run, verify and profile resonant lower-dimensional tori.
//!
//! Exit codes: 0 success, 2 precondition failure, 3 convergence failure,
//! 4 I/O failure. `KAM_THREADS` caps the number of worker threads.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "kam", version, about = "Counter-term KAM scheme for resonant lower-dimensional tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce the configured problem to the model coordinates and print the
    /// admissibility table.
    Reduce {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reduce, iterate, locate the torus and verify it; writes the history,
    /// the zeta profile and the torus.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the invariance residual of a torus file against a problem
    /// (an experiment config or a reduced-problem file).
    Verify {
        #[arg(long)]
        torus: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 32)]
        grid: usize,
    },
    /// Iterate and write the zeta, |alpha| and nu_max(beta) profile as CSV.
    Zeta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("KAM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Precondition(format!("KAM_THREADS must be a positive integer, got {:?}", v)))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Precondition(format!("cannot start {} threads: {}", n, e)))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Reduce { config } => commands::cmd_reduce(&config),
        Command::Run { config } => commands::cmd_run(&config),
        Command::Verify { torus, problem, grid } => commands::cmd_verify(&torus, &problem, grid),
        Command::Zeta { config, out } => commands::cmd_zeta(&config, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
