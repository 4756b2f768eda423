//! Command-line error taxonomy mapped onto process exit codes.

use thiserror::Error;

/// Errors surfaced to the user. Exit codes: usage 1, data 2, check 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }

    /// Wraps an I/O error with the path it concerned.
    pub fn io(context: &str, path: &std::path::Path, err: std::io::Error) -> CliError {
        CliError::Data(format!("{context} {}: {err}", path.display()))
    }
}
