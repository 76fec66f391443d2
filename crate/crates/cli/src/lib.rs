//! Command-line front end: configuration parsing, report types and subcommands.

pub mod config;
pub mod report;

mod commands;

pub use commands::{
    invariance_section, run, Outcome, EXIT_BREAKDOWN, EXIT_CONFIG, EXIT_FAIL, EXIT_INFEASIBLE,
    EXIT_OK, INVARIANCE_TOL, REPRESENTATION_TOL, SECOND_ORDER_TOL,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] manicorn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use manicorn::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(E::InfeasiblePoint | E::NotInSet) => EXIT_INFEASIBLE,
            CliError::Core(E::BadParams(_) | E::DimensionMismatch { .. }) => EXIT_CONFIG,
            CliError::Core(E::NoMultiplier { .. }) => EXIT_FAIL,
            CliError::Core(_) => EXIT_BREAKDOWN,
        }
    }
}
