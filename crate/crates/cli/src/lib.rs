//! Driver for the `cmalab` binary: instance files, run directories and the
//! five verbs `solve`, `lemmas`, `curvature`, `conditions` and `report`.

pub mod commands;
pub mod instance;
pub mod manifest;

use thiserror::Error;

/// Every failure a verb can end with, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("invalid input: {0}")]
    Parse(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("density conditions failed: {0}")]
    Conditions(String),
    #[error("inequality violated: {0}")]
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Conditions(_) => 4,
            CliError::Violation(_) => 5,
        }
    }
}

impl From<cma_core::Error> for CliError {
    fn from(e: cma_core::Error) -> Self {
        use cma_core::Error as E;
        match e {
            E::InvalidDensity { .. } | E::KernelUnderresolved { .. } => CliError::Conditions(e.to_string()),
            E::InvalidDomain(_) | E::InvalidSchedule(_) | E::InvalidOptions(_) | E::Snapshot(_) | E::ChartDomain { .. } => {
                CliError::Parse(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}
