//! `genrec`: signal recovery from outlier-corrupted compressed measurements
//! under a generator-network prior.
//!
//! Subcommands: `run` (seeded Monte-Carlo sweeps over measurement and outlier
//! counts), `theory` (desk-scale certification of the recovery conditions),
//! `gen-weights` (write a seeded GENREC weight file), `replay` (re-solve a
//! serialized observation and export the iteration trace).

mod common;
mod gen_weights_cmd;
mod replay_cmd;
mod run_cmd;
mod settings;
mod theory_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::CliError;
use settings::CommonOpts;

#[derive(Parser, Debug)]
#[command(name = "genrec", version, about = "Compressed-measurement recovery with generator priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a seeded experiment sweep and write results.csv / summary.csv
    Run {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Certify the recovery conditions at desk scale and write a report
    Theory {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Generate a seeded GENREC v1 weight file
    GenWeights {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Re-solve a serialized observation and write its iteration trace
    Replay {
        /// Observation file written by `run`
        observation: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { opts } => run_cmd::run(&opts),
        Command::Theory { opts } => theory_cmd::run(&opts),
        Command::GenWeights { opts } => gen_weights_cmd::run(&opts),
        Command::Replay { observation, opts } => replay_cmd::run(&observation, &opts),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
