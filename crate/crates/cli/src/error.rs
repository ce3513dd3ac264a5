use std::process::ExitCode;

use trapsim_core::Error;

/// Failure classes with fixed process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, arguments or input data (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// The computation itself failed (exit 3).
    #[error("numerical error: {0}")]
    Numeric(String),
    /// A fit did not converge; results were still written (exit 4).
    #[error("fit did not converge: {0}")]
    NotConverged(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Io(_) => 1,
        })
    }

    /// Classify a core error raised while checking inputs.
    pub fn config(e: Error) -> Self {
        match e {
            Error::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }

    /// Classify a core error raised during a run.
    pub fn numeric(e: Error) -> Self {
        match e {
            Error::Io(io) => CliError::Io(io),
            Error::DegenerateData(m) => CliError::Config(format!("degenerate data: {m}")),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
