use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument or configuration value violates a precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// SNR calibration was requested for a signal with no measurement energy.
    #[error("SNR is undefined: noiseless measurement energy is zero")]
    UndefinedSnr,

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Process exit code for the CLI: 1 for parameter errors, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::UndefinedSnr => 1,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
        }
    }
}
