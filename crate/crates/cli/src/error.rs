use serde::Serialize;
use thiserror::Error;

/// Failure classes mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input or configuration; nothing was computed. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// A solver or estimator failed on valid input. Exit code 2.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn record(&self) -> ErrorRecord<'_> {
        ErrorRecord {
            error: ErrorBody {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: self.to_string(),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub error: ErrorBody<'a>,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody<'a> {
    pub kind: &'a str,
    pub exit_code: u8,
    pub message: String,
}

impl From<aloocv::Error> for CliError {
    fn from(e: aloocv::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(format!("csv error: {e}"))
    }
}
