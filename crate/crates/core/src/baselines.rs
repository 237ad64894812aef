//! Influence-function style baseline and per-sample alignment of estimators.
//!
//! The baseline keeps the parameter at `θ̂` and adds the quadratic correction
//! `(1/(n−1)) ∇ℓᵢᵀ Ĥ_{z^{n\i}}⁻¹ ∇ℓᵢ`; its mean over samples is the in-sample
//! loss plus the correction term `R̂`. Where the approximate LOO estimate
//! evaluates the loss at the moved parameter, this one only linearizes it, which
//! makes it underestimate the leave-one-out loss when the fit is overfit.

use serde::Serialize;

use crate::aloocv::{AcvReport, DowndateMode, LeaveOutSolver};
use crate::error::Result;
use crate::model::{Dataset, RegularizedObjective};
use crate::solver::FittedModel;

/// `ℓ(zᵢ; θ̂) + (1/(n−1)) ∇ℓ(zᵢ; θ̂)ᵀ Ĥ_{z^{n\i}}(θ̂, λ)⁻¹ ∇ℓ(zᵢ; θ̂)`.
pub fn influence_baseline(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    i: usize,
) -> Result<f64> {
    let engine = LeaveOutSolver::new(dataset, fitted, objective, DowndateMode::RankOne)?;
    influence_with(&engine, dataset, fitted, objective, i)
}

/// All `n` baseline values, sharing one factorization.
pub fn influence_vector(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
) -> Result<Vec<f64>> {
    let engine = LeaveOutSolver::new(dataset, fitted, objective, DowndateMode::RankOne)?;
    (0..dataset.n())
        .map(|i| influence_with(&engine, dataset, fitted, objective, i))
        .collect()
}

fn influence_with(
    engine: &LeaveOutSolver<'_>,
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    i: usize,
) -> Result<f64> {
    let grad = engine.sample_gradient(i);
    let step = engine.update(i)?;
    Ok(objective.loss().loss(dataset.sample(i), fitted.theta()) + grad.dot(&step))
}

/// One sample's estimates side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignedEstimates {
    pub index: usize,
    pub in_sample: f64,
    pub cv: Option<f64>,
    pub acv: f64,
    pub influence: Option<f64>,
    /// `(ACV − CV) / CV`
    pub normalized_difference: Option<f64>,
}

pub fn align(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    report: &AcvReport,
) -> Vec<AlignedEstimates> {
    report
        .estimates
        .iter()
        .map(|e| AlignedEstimates {
            index: e.index,
            in_sample: objective.loss().loss(dataset.sample(e.index), fitted.theta()),
            cv: e.cv_exact,
            acv: e.acv,
            influence: e.if_baseline,
            normalized_difference: e.cv_exact.map(|cv| (e.acv - cv) / cv),
        })
        .collect()
}
