use thiserror::Error;

use crate::solver::FittedModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
        partial: Box<FittedModel>,
    },

    #[error("full-data Hessian is singular or indefinite")]
    SingularHessian,

    #[error("estimator undefined for leave-out {indices:?}: {reason}")]
    EstimatorUndefined { indices: Vec<usize>, reason: String },

    #[error("leave-out fit for index {index} failed: {source}")]
    LeaveOut {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("csv column `{0}` not found")]
    MissingColumn(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotConverged { .. }
            | Error::SingularHessian
            | Error::EstimatorUndefined { .. }
            | Error::NonFinite(_) => true,
            Error::LeaveOut { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
