use std::path::PathBuf;

use coopmine_core::pool::PoolError;
use coopmine_core::{DilemmaError, EquilibriumError, SimError, StochasticError};

/// Exit status for invalid input (unreadable, unparsable or inconsistent
/// configuration).
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status when a solver fails on a valid configuration.
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv output {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("thread pool: {0}")]
    Threads(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Dilemma(#[from] DilemmaError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl CliError {
    pub fn invalid(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Validation(vec![format!("{}: {message}", path.into())])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. }
            | CliError::Parse { .. }
            | CliError::Validation(_)
            | CliError::Write { .. }
            | CliError::Csv { .. }
            | CliError::Threads(_) => EXIT_VALIDATION,
            // The dilemma validators reject payoffs and strategies that come
            // straight from the config.
            CliError::Dilemma(_) | CliError::Simulation(_) => EXIT_VALIDATION,
            CliError::Equilibrium(_) | CliError::Pool(_) | CliError::Stochastic(_) => EXIT_NUMERIC,
        }
    }
}
