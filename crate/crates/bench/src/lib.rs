//! Command-line harness for the task assignment solvers: dataset I/O,
//! single runs, parameter sweeps and machine-readable reports.

pub mod cli;
pub mod dataset;
pub mod report;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("unreadable dataset: {0}")]
    Dataset(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] tcsc_core::Error),
}

impl CliError {
    /// Process exit status: 1 for I/O and run failures, 2 for usage errors,
    /// 3 for instances that fail validation.
    pub fn exit_code(&self) -> u8 {
        use tcsc_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::InvalidConfig(_) | E::UnsupportedQualityMode) => 2,
            CliError::Core(E::Validation(_)) => 3,
            _ => 1,
        }
    }
}
