//! Command-line pipeline: train, influence, report, validate, compare.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinn_influence::influence::TargetKind;

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pinn-influence", version, about = "Train PINNs for cylinder flow and attribute them to collocation points")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoints, loss history and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the Hessian and write influence matrices for each target.
    Influence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Comma-separated target kinds.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<TargetKind>>,
    },
    /// Aggregate an influence directory into indicator tables and heatmaps.
    Report {
        /// Directory written by `influence`.
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare influence predictions with exact retraining.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        epsilon: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<TargetKind>>,
        /// Run even above the model-size guard.
        #[arg(long)]
        force: bool,
    },
    /// Absolute errors against a reference solution CSV (`x,y,u1,u2,p`).
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    match cli.command {
        Command::Train { config, out } => commands::train::run(&config, out),
        Command::Influence {
            config,
            checkpoint,
            out,
            lambda,
            targets,
        } => commands::influence::run(commands::influence::Options {
            config,
            checkpoint,
            out,
            lambda,
            targets,
        }),
        Command::Report { dir, out } => commands::report::run(&dir, out),
        Command::Validate {
            config,
            checkpoint,
            out,
            epsilon,
            lambda,
            targets,
            force,
        } => commands::validate::run(commands::validate::Options {
            config,
            checkpoint,
            out,
            epsilon,
            lambda,
            targets,
            force,
        }),
        Command::Compare {
            config,
            checkpoint,
            reference,
            out,
        } => commands::compare::run(&config, &checkpoint, &reference, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
