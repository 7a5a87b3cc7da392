use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] spectralens_core::Error),

    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),

    #[error("non-finite value in report field {0}")]
    NonFinite(String),
}

impl CliError {
    /// 1 for bad input or flags, 2 for numerical failures on valid input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Output { .. } => 1,
            CliError::Core(e) if e.is_input_error() => 1,
            CliError::Core(_) | CliError::Serialize(_) | CliError::NonFinite(_) => 2,
        }
    }
}
