//! Command failures and their exit codes.

use ldl_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("{0}")]
    Usage(String),

    /// A checked mathematical property failed.
    #[error("property violation: {0}")]
    Violation(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

impl CliError {
    /// 2 usage, configuration or I/O; 3 numerical failure; 4 property violation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Numerical(_) | Error::Diverged { .. } | Error::Integration { .. } | Error::Evaluation(_)) => 3,
            CliError::Violation(_) => 4,
            _ => 2,
        }
    }
}
