//! Approximate leave-one-out cross validation (ALOOCV) for regularized
//! empirical risk minimization, and tuning of regularization weights by
//! descending the approximate leave-one-out loss.
//!
//! The pieces, bottom up:
//!
//! - [`model`]: samples, datasets, the loss/regularizer contracts and the
//!   regularized objective with its empirical Hessian.
//! - [`models`]: diagonal ridge, logistic regression and elastic net.
//! - [`solver`]: Newton / proximal-gradient ERM fits and exact LOOCV.
//! - [`aloocv`]: one-step approximate leave-one-out parameters and the ACV vector.
//! - [`baselines`]: the influence-function style comparison estimate.
//! - [`tuner`]: hyperparameter gradients and the batch/stochastic tuning loops.
//! - [`data`]: seeded synthetic generators and CSV ingestion.
//! - [`bench`]: runtime scaling of exact vs approximate LOOCV.

pub mod aloocv;
pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod linalg;
pub mod model;
pub mod models;
pub mod solver;
pub mod tuner;

pub use aloocv::{
    acv_vector, aloocv_parameter, aloocv_parameter_q, error_scaling_probe, AcvOptions, AcvReport,
    DowndateMode, LeaveOutSolver, LooEstimate,
};
pub use baselines::influence_baseline;
pub use error::{Error, Result};
pub use model::{
    empirical_hessian, Dataset, LambdaVector, LossModel, ParameterVector, RegularizedObjective,
    Regularizer, RegularizerSpec, Sample, Smoothness,
};
pub use solver::{fit, loocv_exact, FittedModel, SolverConfig};
pub use tuner::{
    lambda_gradient_full, per_sample_gradient, tune_batch, tune_stochastic, TuneConfig, TuneTrace,
};

/// Library version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
