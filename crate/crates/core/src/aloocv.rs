//! Approximate leave-one-out cross validation.
//!
//! Starting from the full fit `θ̂`, the leave-one-out parameter is approximated
//! by a single Newton step on the leave-one-out objective:
//!
//! ```text
//! θ̃⁽ⁱ⁾ = θ̂ + (1/(n−1)) · Ĥ_{z^{n\i}}(θ̂, λ)⁻¹ · ∇ℓ(zᵢ; θ̂)
//!      = θ̂ + [Σ_{j≠i} ∇²ℓ(z_j; θ̂) + λᵀ∇²r(θ̂)]⁻¹ · ∇ℓ(zᵢ; θ̂)
//! ```
//!
//! The second line is what is computed: the `1/(n−1)` factors cancel. The full
//! Hessian is factored once; each leave-one-out solve is a rank-one
//! Sherman–Morrison correction of that factor when the loss Hessian is rank
//! one, and a fresh factorization of the downdated matrix otherwise.
//!
//! For l1-regularized fits everything is restricted to the active set of `θ̂`;
//! coordinates that are zero in `θ̂` stay zero.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::linalg::{scatter, submatrix, subvector, SpdFactor};
use crate::model::{symmetrize, Dataset, LambdaVector, ParameterVector, RegularizedObjective};
use crate::models::{self, ModelParts};
use crate::solver::{self, mean, standard_error, FittedModel, SolverConfig};

/// How each leave-one-out Hessian solve is obtained from the full-data factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DowndateMode {
    /// Sherman–Morrison on the full factor; falls back to `Refactor` for losses
    /// without a rank-one Hessian.
    #[default]
    RankOne,
    /// Assemble and factor the downdated matrix for every index.
    Refactor,
}

/// Precomputed state shared by every leave-out estimate of one fitted model.
#[derive(Debug)]
pub struct LeaveOutSolver<'a> {
    dataset: &'a Dataset,
    objective: &'a RegularizedObjective,
    theta: &'a DVector<f64>,
    working: Vec<usize>,
    hessian: DMatrix<f64>,
    factor: SpdFactor,
    mode: DowndateMode,
}

impl<'a> LeaveOutSolver<'a> {
    pub fn new(
        dataset: &'a Dataset,
        fitted: &'a FittedModel,
        objective: &'a RegularizedObjective,
        mode: DowndateMode,
    ) -> Result<Self> {
        check_fitted(dataset, fitted, objective)?;
        let theta = fitted.theta();
        let working = fitted.working_set();
        let hessian = submatrix(&objective.total_hessian(dataset, theta, &[])?, &working);
        let factor = SpdFactor::new(hessian.clone()).ok_or(Error::SingularHessian)?;
        Ok(Self {
            dataset,
            objective,
            theta,
            working,
            hessian,
            factor,
            mode,
        })
    }

    pub fn working_set(&self) -> &[usize] {
        &self.working
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        self.theta
    }

    /// Loss gradient of sample `i` at `θ̂`, restricted to the working set.
    pub fn sample_gradient(&self, i: usize) -> DVector<f64> {
        subvector(&self.objective.loss().grad(self.dataset.sample(i), self.theta), &self.working)
    }

    fn sample_hessian(&self, i: usize) -> DMatrix<f64> {
        let k = self.theta.len();
        let mut h = DMatrix::zeros(k, k);
        self.objective
            .loss()
            .add_hess_to(self.dataset.sample(i), self.theta, 1.0, &mut h);
        submatrix(&h, &self.working)
    }

    /// Solves `[A − ∇²ℓ(zᵢ; θ̂)] x = rhs` on the working set, where `A` is the
    /// unnormalized full-data Hessian.
    pub fn solve_without(&self, i: usize, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let undefined = || Error::EstimatorUndefined {
            indices: vec![i],
            reason: "leave-one-out Hessian is singular or indefinite".into(),
        };
        if self.mode == DowndateMode::RankOne {
            if let Some((c, v)) = self
                .objective
                .loss()
                .hess_rank_one(self.dataset.sample(i), self.theta)
            {
                let v = subvector(&v, &self.working);
                return self.factor.downdate_solve(c, &v, rhs).ok_or_else(undefined);
            }
        }
        self.solve_without_set(&[i], rhs).map_err(|_| undefined())
    }

    /// Solves with the Hessian downdated by every sample in `set`, by refactoring.
    pub fn solve_without_set(&self, set: &[usize], rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let mut h = self.hessian.clone();
        for &i in set {
            h -= self.sample_hessian(i);
        }
        symmetrize(&mut h);
        let factor = SpdFactor::new(h).ok_or_else(|| Error::EstimatorUndefined {
            indices: set.to_vec(),
            reason: "leave-out Hessian is singular or indefinite".into(),
        })?;
        Ok(factor.solve(rhs))
    }

    /// The Newton update `θ̃⁽ⁱ⁾ − θ̂` on the working set.
    pub fn update(&self, i: usize) -> Result<DVector<f64>> {
        self.check_index(i)?;
        self.solve_without(i, &self.sample_gradient(i))
    }

    pub fn parameter(&self, i: usize) -> Result<ParameterVector> {
        let step = self.update(i)?;
        ParameterVector::new(self.theta + scatter(&step, &self.working, self.theta.len()))
    }

    /// Leave-q-out: `θ̂ + [A − Σ_{i∈S} ∇²ℓ(zᵢ; θ̂)]⁻¹ Σ_{i∈S} ∇ℓ(zᵢ; θ̂)`.
    pub fn parameter_q(&self, set: &[usize]) -> Result<ParameterVector> {
        if set.is_empty() {
            return Err(Error::InvalidInput("leave-out set is empty".into()));
        }
        self.dataset.check_exclusion(set)?;
        if let [i] = set {
            return self.parameter(*i);
        }
        let mut rhs = DVector::zeros(self.working.len());
        for &i in set {
            rhs += self.sample_gradient(i);
        }
        let step = self.solve_without_set(set, &rhs)?;
        ParameterVector::new(self.theta + scatter(&step, &self.working, self.theta.len()))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        self.dataset.check_exclusion(&[i])
    }
}

pub(crate) fn check_fitted(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
) -> Result<()> {
    objective.validate(dataset)?;
    objective.check_theta(fitted.theta())?;
    if !fitted.converged {
        return Err(Error::InvalidInput("fitted model has not converged".into()));
    }
    if !fitted.excluded.is_empty() {
        return Err(Error::InvalidInput(
            "expected a fit on the full dataset".into(),
        ));
    }
    if fitted.lambda != *objective.lambda() {
        return Err(Error::InvalidInput(
            "fitted model was solved under a different lambda".into(),
        ));
    }
    Ok(())
}

/// `θ̃⁽ⁱ⁾`, the approximate parameter with sample `i` left out.
pub fn aloocv_parameter(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    i: usize,
) -> Result<ParameterVector> {
    LeaveOutSolver::new(dataset, fitted, objective, DowndateMode::RankOne)?.parameter(i)
}

/// Approximate parameter with the samples in `set` left out.
pub fn aloocv_parameter_q(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    set: &[usize],
) -> Result<ParameterVector> {
    LeaveOutSolver::new(dataset, fitted, objective, DowndateMode::RankOne)?.parameter_q(set)
}

#[derive(Debug, Clone)]
pub struct LooEstimate {
    pub index: usize,
    pub theta_tilde: ParameterVector,
    /// `ℓ(zᵢ; θ̃⁽ⁱ⁾)`.
    pub acv: f64,
    pub cv_exact: Option<f64>,
    pub if_baseline: Option<f64>,
    /// l1 fits only: the exact leave-one-out support differs from the full one.
    pub support_violation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UndefinedEstimate {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct AcvReport {
    /// One entry per index whose estimate is defined, in index order.
    pub estimates: Vec<LooEstimate>,
    pub undefined: Vec<UndefinedEstimate>,
    pub acv_mean: f64,
    pub acv_std_error: f64,
    pub cv_mean: Option<f64>,
    pub cv_std_error: Option<f64>,
    pub if_mean: Option<f64>,
    pub if_std_error: Option<f64>,
    pub wall_time: Duration,
}

impl AcvReport {
    pub fn acv_values(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.acv).collect()
    }

    pub fn cv_values(&self) -> Option<Vec<f64>> {
        self.estimates.iter().map(|e| e.cv_exact).collect()
    }

    pub fn if_values(&self) -> Option<Vec<f64>> {
        self.estimates.iter().map(|e| e.if_baseline).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct AcvOptions {
    pub with_exact: bool,
    pub with_if: bool,
    pub mode: DowndateMode,
    /// Used for the exact refits.
    pub solver: SolverConfig,
}

/// The approximate cross validation vector `ACVᵢ = ℓ(zᵢ; θ̃⁽ⁱ⁾)` and its mean.
pub fn acv_vector(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    options: &AcvOptions,
) -> Result<AcvReport> {
    let start = Instant::now();
    let engine = LeaveOutSolver::new(dataset, fitted, objective, options.mode)?;
    let loss = objective.loss();

    let per_index: Vec<std::result::Result<LooEstimate, UndefinedEstimate>> = (0..dataset.n())
        .into_par_iter()
        .map(|i| {
            let sample = dataset.sample(i);
            let grad = engine.sample_gradient(i);
            let step = engine.solve_without(i, &grad).map_err(|e| UndefinedEstimate {
                index: i,
                reason: e.to_string(),
            })?;
            let theta_tilde = ParameterVector::new(
                fitted.theta() + scatter(&step, engine.working_set(), fitted.theta().len()),
            )
            .map_err(|e| UndefinedEstimate {
                index: i,
                reason: e.to_string(),
            })?;
            let acv = loss.loss(sample, &theta_tilde);
            let if_baseline = options
                .with_if
                .then(|| loss.loss(sample, fitted.theta()) + grad.dot(&step));
            Ok(LooEstimate {
                index: i,
                theta_tilde,
                acv,
                cv_exact: None,
                if_baseline,
                support_violation: None,
            })
        })
        .collect();

    let mut estimates = Vec::with_capacity(dataset.n());
    let mut undefined = Vec::new();
    for r in per_index {
        match r {
            Ok(e) => estimates.push(e),
            Err(u) => undefined.push(u),
        }
    }

    if options.with_exact {
        let refits = solver::loocv_refits(dataset, objective, &options.solver, fitted.theta())?;
        for est in &mut estimates {
            let refit = &refits[est.index];
            est.cv_exact = Some(refit.cv);
            if let (Some(full), Some(loo)) = (&fitted.active_set, &refit.fitted.active_set) {
                est.support_violation = Some(full != loo);
            }
        }
    }

    if estimates.is_empty() {
        return Err(Error::EstimatorUndefined {
            indices: undefined.iter().map(|u| u.index).collect(),
            reason: "no leave-one-out estimate is defined".into(),
        });
    }

    let acv = estimates.iter().map(|e| e.acv).collect::<Vec<_>>();
    let cv: Option<Vec<f64>> = estimates.iter().map(|e| e.cv_exact).collect();
    let ifs: Option<Vec<f64>> = estimates.iter().map(|e| e.if_baseline).collect();
    Ok(AcvReport {
        acv_mean: mean(&acv),
        acv_std_error: standard_error(&acv),
        cv_mean: cv.as_deref().map(mean),
        cv_std_error: cv.as_deref().map(standard_error),
        if_mean: ifs.as_deref().map(mean),
        if_std_error: ifs.as_deref().map(standard_error),
        estimates,
        undefined,
        wall_time: start.elapsed(),
    })
}

/// Model families the error-scaling probe can generate data for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProbeFamily {
    /// Uniform ridge on `synth_ridge` data with half the coordinates relevant.
    Ridge { p: usize, lambda: f64, noise_var: f64 },
    /// Logistic regression with intercept on `synth_logistic` data.
    Logistic { p: usize, lambda: f64, signal: f64 },
}

impl ProbeFamily {
    fn generate(&self, n: usize, seed: u64) -> Result<(Dataset, RegularizedObjective)> {
        let (parts, dataset, lambda): (ModelParts, Dataset, f64) = match *self {
            ProbeFamily::Ridge { p, lambda, noise_var } => (
                models::ridge(p)?,
                data::synth_ridge(n, p, p.div_ceil(2), noise_var, seed)?.dataset,
                lambda,
            ),
            ProbeFamily::Logistic { p, lambda, signal } => (
                models::logistic(p, true)?,
                data::synth_logistic(n, p, signal, seed)?.dataset,
                lambda,
            ),
        };
        let objective = RegularizedObjective::new(parts.0, parts.1, LambdaVector::new(vec![lambda])?)?;
        Ok((dataset, objective))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    /// `max_i ‖θ̂(zⁿ) − θ̂(z^{n\i})‖∞`
    pub full_vs_loo: f64,
    /// `max_i ‖θ̂(z^{n\i}) − θ̃⁽ⁱ⁾‖∞`
    pub loo_vs_approx: f64,
}

/// For each `n`, fits the generated problem, refits every leave-one-out problem
/// exactly and compares against the approximation.
pub fn error_scaling_probe(
    family: ProbeFamily,
    n_grid: &[usize],
    seed: u64,
    config: &SolverConfig,
) -> Result<Vec<ScalingRow>> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n_grid must be strictly ascending".into()));
    }
    if n_grid.iter().any(|&n| n < 20) {
        return Err(Error::InvalidInput("every n in the grid must be ≥ 20".into()));
    }
    n_grid
        .iter()
        .map(|&n| {
            let (dataset, objective) = family.generate(n, seed)?;
            let full = solver::fit(&dataset, &objective, config, &[], None)?;
            let engine = LeaveOutSolver::new(&dataset, &full, &objective, DowndateMode::RankOne)?;
            let refits = solver::loocv_refits(&dataset, &objective, config, full.theta())?;
            let mut row = ScalingRow {
                n,
                full_vs_loo: 0.0,
                loo_vs_approx: 0.0,
            };
            for refit in &refits {
                let approx = engine.parameter(refit.index)?;
                let loo = refit.fitted.theta();
                row.full_vs_loo = row.full_vs_loo.max((full.theta() - loo).amax());
                row.loo_vs_approx = row.loo_vs_approx.max((loo - &*approx).amax());
            }
            Ok(row)
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
