use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes of payload, found {found}")]
    Length { expected: u64, found: u64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parse error (record {record}): {message}")]
    Parse { record: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("insufficient spectrum: {0}")]
    InsufficientSpectrum(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("gradient descent diverged: {0}")]
    Divergence(String),
}

impl Error {
    /// True for errors caused by bad input (files, flags, arguments) rather
    /// than by a numerical failure on valid input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Format(_)
                | Error::Length { .. }
                | Error::Dimension(_)
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::Capability(_)
        )
    }
}
