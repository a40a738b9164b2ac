//! Command-line pipeline (`synth`, `init`, `train`, `render`, `eval`) and the
//! frame-streaming render server.

pub mod commands;
pub mod protocol;
pub mod report;
pub mod server;

use std::fmt;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable/invalid input files (exit 2).
    Input(anyhow::Error),
    /// Training produced a non-finite loss (exit 3).
    NonFinite(anyhow::Error),
    /// Anything else (exit 1).
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::NonFinite(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        CliError::Input(e.into())
    }

    pub fn other(e: impl Into<anyhow::Error>) -> Self {
        CliError::Other(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "invalid input: {e:#}"),
            CliError::NonFinite(e) => write!(f, "training diverged: {e:#}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
