use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;

use args::Cli;

/// Distinguishes bad input (exit 2) from failures of the tool itself (exit 1).
#[derive(Debug)]
pub enum CliError {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl CliError {
    pub fn user(e: impl Into<anyhow::Error>) -> Self {
        CliError::User(e.into())
    }

    pub fn internal(e: impl Into<anyhow::Error>) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<pfolio_core::Error> for CliError {
    fn from(e: pfolio_core::Error) -> Self {
        use pfolio_core::selectors::SelectorError as S;
        use pfolio_core::Error as E;
        let user = match &e {
            E::Scenario(_) | E::Model(_) => true,
            E::Selector(s) => matches!(
                s,
                S::UnknownApproach(_)
                    | S::TooFewInstances(_)
                    | S::NoAlgorithms
                    | S::Degenerate
                    | S::LengthMismatch { .. }
                    | S::UnknownHyperparameter { .. }
                    | S::InvalidHyperparameter { .. }
                    | S::EmptyGrid
                    | S::BadGrid(_)
            ),
            _ => false,
        };
        if user {
            CliError::User(e.into())
        } else {
            CliError::Internal(e.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PF_LOG", "warn")).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}
