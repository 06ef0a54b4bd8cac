use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] tbqkd_core::Error),

    #[error(transparent)]
    Session(#[from] tbqkd_net::NetError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("report: {0}")]
    Report(String),
}

impl CliError {
    /// Process exit code: 2 for configuration and validation errors, 3 for
    /// an aborted session, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Validation(_) => 2,
            Self::Core(tbqkd_core::Error::Validation(_) | tbqkd_core::Error::DegenerateIntensity) => 2,
            Self::Session(e) if e.is_abort() => 3,
            _ => 1,
        }
    }
}
