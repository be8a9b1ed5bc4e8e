//! `mkdv`: run coupled KdV and condensate simulations from config files.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use config::{load_config, Command, SchemaError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Core(#[from] mkdv_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for failed checks, 1 for everything that stopped the run.
    fn exit_code(&self) -> u8 {
        match self {
            Self::Verification(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mkdv",
    version,
    about = "Coupled KdV systems and their condensate origin"
)]
struct Cli {
    /// Accepted for interface stability; no command draws random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    /// Universal coupling tensors.
    Coupling {
        #[command(subcommand)]
        action: CouplingAction,
    },
    /// Coupled KdV integration.
    Kdv {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Multi-component NLS integration.
    Mnls {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Sound-speed eigenstructure of a mixture.
    Spectrum {
        #[command(subcommand)]
        action: AnalyzeAction,
    },
    /// Convergence of condensate dynamics to the coupled KdV system.
    Reduce {
        #[command(subcommand)]
        action: VerifyAction,
    },
}

#[derive(Subcommand)]
enum CouplingAction {
    /// Build N, L, R and check their consistency relations.
    #[command(group(ArgGroup::new("scales").required(true).args(["s1", "mnls"])))]
    Check {
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        weights: Vec<f64>,
        #[arg(long, requires = "s2", allow_hyphen_values = true)]
        s1: Option<f64>,
        #[arg(long, requires = "s1", allow_hyphen_values = true)]
        s2: Option<f64>,
        /// Use s1 = s2 = 1 / (1 + sum w).
        #[arg(long, conflicts_with_all = ["s1", "s2"])]
        mnls: bool,
    },
}

#[derive(Subcommand)]
enum RunAction {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeAction {
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum VerifyAction {
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `reduction.epsilons`.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
}

fn dispatch(command: Top) -> Result<(), CliError> {
    match command {
        Top::Coupling {
            action: CouplingAction::Check {
                weights, s1, s2, ..
            },
        } => commands::coupling_check(weights, s1, s2),
        Top::Kdv {
            action: RunAction::Run { config },
        } => commands::kdv_run(&load_config(&config, Command::Kdv)?),
        Top::Mnls {
            action: RunAction::Run { config },
        } => commands::mnls_run(&load_config(&config, Command::Mnls)?),
        Top::Spectrum {
            action: AnalyzeAction::Analyze { config },
        } => commands::spectrum_analyze(&load_config(&config, Command::Spectrum)?),
        Top::Reduce {
            action: VerifyAction::Verify { config, epsilons },
        } => {
            let mut cfg = load_config(&config, Command::Reduce)?;
            if let Some(eps) = epsilons {
                cfg.override_epsilons(eps)?;
            }
            commands::reduce_verify(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
