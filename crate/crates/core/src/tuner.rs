//! Regularization tuning by descending the approximate leave-one-out loss.
//!
//! Each leave-one-out parameter depends on `λ` through
//! `∇_λ θ̂(z^{n\i}) = −[A_{-i}]⁻¹ ∇_θ r`, with `A_{-i}` the unnormalized
//! leave-one-out Hessian. Substituting the approximate parameter `θ̃⁽ⁱ⁾` gives
//! the per-sample gradient
//!
//! ```text
//! g⁽ⁱ⁾ = −∇_θ r(θ̃⁽ⁱ⁾)ᵀ · A_{-i}(θ̃⁽ⁱ⁾, λ)⁻¹ · ∇_θ ℓ(zᵢ; θ̃⁽ⁱ⁾)
//! ```
//!
//! and `ḡ`, their mean, drives projected gradient descent on `λ` (batch) or its
//! single-sample version (stochastic).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aloocv::{check_fitted, DowndateMode, LeaveOutSolver};
use crate::data::Stream;
use crate::error::{Error, Result};
use crate::linalg::{scatter, submatrix, subrows, subvector, SpdFactor};
use crate::model::{Dataset, LambdaVector, RegularizedObjective};
use crate::solver::{fit, mean, FittedModel, SolverConfig};

/// Where the per-sample gradient evaluates `∇r`, the Hessian and `∇ℓ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationPoint {
    /// At the approximate leave-one-out parameter `θ̃⁽ⁱ⁾`.
    #[default]
    Approximate,
    /// At the full fit `θ̂` (cheaper; Hessians are shared across samples).
    FullFit,
}

/// `∇_λ θ̂(zⁿ) = −[Σ ∇²ℓ + λᵀ∇²r]⁻¹ ∇_θ r(θ̂)`, a `k × M` matrix.
///
/// For l1 fits rows outside the active set are zero.
pub fn lambda_gradient_full(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
) -> Result<DMatrix<f64>> {
    check_fitted(dataset, fitted, objective)?;
    let theta = fitted.theta();
    let working = fitted.working_set();
    let h = submatrix(&objective.total_hessian(dataset, theta, &[])?, &working);
    let factor = SpdFactor::new(h).ok_or(Error::SingularHessian)?;
    let jac = subrows(&objective.regularizer_jacobian(theta), &working);
    let sub = -factor.solve_matrix(&jac);
    let mut out = DMatrix::zeros(theta.len(), jac.ncols());
    for (r, &j) in working.iter().enumerate() {
        out.set_row(j, &sub.row(r));
    }
    Ok(out)
}

/// `g⁽ⁱ⁾` for one sample.
pub fn per_sample_gradient(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    i: usize,
) -> Result<DVector<f64>> {
    let engine = LeaveOutSolver::new(dataset, fitted, objective, DowndateMode::RankOne)?;
    sample_gradient_with(&engine, dataset, objective, i, EvaluationPoint::Approximate).map(|(g, _)| g)
}

/// Returns `(g⁽ⁱ⁾, ACVᵢ)`.
fn sample_gradient_with(
    engine: &LeaveOutSolver<'_>,
    dataset: &Dataset,
    objective: &RegularizedObjective,
    i: usize,
    point: EvaluationPoint,
) -> Result<(DVector<f64>, f64)> {
    let working = engine.working_set();
    let k = engine.theta_hat().len();
    let sample = dataset.sample(i);
    let step = engine.update(i)?;
    let theta_tilde = engine.theta_hat() + scatter(&step, working, k);
    let acv = objective.loss().loss(sample, &theta_tilde);

    let (jac, solved) = match point {
        EvaluationPoint::FullFit => (objective.regularizer_jacobian(engine.theta_hat()), step),
        EvaluationPoint::Approximate => {
            let grad = subvector(&objective.loss().grad(sample, &theta_tilde), working);
            let solved = if objective.has_constant_hessian() {
                engine.solve_without(i, &grad)?
            } else {
                let h = objective.total_hessian(dataset, &theta_tilde, &[i])?;
                let factor = SpdFactor::new(submatrix(&h, working)).ok_or_else(|| {
                    Error::EstimatorUndefined {
                        indices: vec![i],
                        reason: "leave-one-out Hessian at the approximate parameter is not positive definite"
                            .into(),
                    }
                })?;
                factor.solve(&grad)
            };
            (objective.regularizer_jacobian(&theta_tilde), solved)
        }
    };
    let g = -(subrows(&jac, working).transpose() * solved);
    Ok((g, acv))
}

/// Mean approximate gradient `ḡ` and the ACV mean at one fitted model.
#[derive(Debug, Clone)]
pub struct GradientEvaluation {
    pub mean_gradient: DVector<f64>,
    pub per_sample: Vec<DVector<f64>>,
    pub acv_mean: f64,
}

/// `ḡ = (1/|I|) Σ_{i∈I} g⁽ⁱ⁾` over `indices` (all samples when `None`).
pub fn approximate_gradient(
    dataset: &Dataset,
    fitted: &FittedModel,
    objective: &RegularizedObjective,
    point: EvaluationPoint,
    indices: Option<&[usize]>,
) -> Result<GradientEvaluation> {
    let engine = LeaveOutSolver::new(dataset, fitted, objective, DowndateMode::RankOne)?;
    let all: Vec<usize> = (0..dataset.n()).collect();
    let indices = indices.unwrap_or(&all);
    if indices.is_empty() {
        return Err(Error::InvalidInput("gradient index set is empty".into()));
    }
    let results: Vec<(DVector<f64>, f64)> = indices
        .par_iter()
        .map(|&i| sample_gradient_with(&engine, dataset, objective, i, point))
        .collect::<Result<_>>()?;
    let m = objective.lambda().len();
    let mut sum = DVector::zeros(m);
    for (g, _) in &results {
        sum += g;
    }
    let acv: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(GradientEvaluation {
        mean_gradient: sum / indices.len() as f64,
        per_sample: results.into_iter().map(|r| r.0).collect(),
        acv_mean: mean(&acv),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Fixed {
        alpha: f64,
    },
    /// Armijo backtracking on the ACV mean; the step grows by `growth` after
    /// each accepted iteration.
    Backtracking {
        alpha0: f64,
        shrink: f64,
        armijo: f64,
        growth: f64,
        max_halvings: usize,
    },
    /// `α_t = α₀ / √(1 + t)`.
    Decay {
        alpha0: f64,
    },
}

impl StepRule {
    pub fn backtracking(alpha0: f64) -> Self {
        StepRule::Backtracking {
            alpha0,
            shrink: 0.5,
            armijo: 1e-4,
            growth: 2.0,
            max_halvings: 40,
        }
    }

    fn initial_alpha(&self) -> f64 {
        match *self {
            StepRule::Fixed { alpha } => alpha,
            StepRule::Backtracking { alpha0, .. } | StepRule::Decay { alpha0 } => alpha0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneConfig {
    pub step_rule: StepRule,
    pub max_epochs: usize,
    pub lower_bound: f64,
    pub solver: SolverConfig,
    pub seed: u64,
    pub evaluation: EvaluationPoint,
    /// Stop once `‖ḡ‖∞` is at or below this.
    pub gradient_tolerance: f64,
    /// Stochastic only: refit every this many steps; `None` is `max(1, n/10)`.
    pub refit_every: Option<usize>,
    /// Samples entering `ḡ` or drawn by the stochastic sampler; `None` is all.
    pub indices: Option<Vec<usize>>,
    /// Refits start from the previous `θ̂`.
    pub warm_start: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::backtracking(1.0),
            max_epochs: 100,
            lower_bound: 0.0,
            solver: SolverConfig::default(),
            seed: 0,
            evaluation: EvaluationPoint::default(),
            gradient_tolerance: 0.0,
            refit_every: None,
            indices: None,
            warm_start: true,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        let alpha = self.step_rule.initial_alpha();
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidInput("step size must be positive".into()));
        }
        if let StepRule::Backtracking { shrink, armijo, growth, .. } = self.step_rule {
            if !(shrink > 0.0 && shrink < 1.0) || !(armijo > 0.0 && armijo < 1.0) || growth < 1.0 {
                return Err(Error::InvalidInput("invalid backtracking constants".into()));
            }
        }
        if !self.lower_bound.is_finite() || self.lower_bound < 0.0 {
            return Err(Error::InvalidInput("lambda lower bound must be finite and ≥ 0".into()));
        }
        if self.refit_every == Some(0) {
            return Err(Error::InvalidInput("refit_every must be ≥ 1".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneRecord {
    pub t: usize,
    pub lambda: Vec<f64>,
    pub acv_mean: f64,
    /// `‖ḡ‖∞` (batch) or the last single-sample gradient's ∞-norm (stochastic).
    pub gradient_norm: f64,
    pub refit_iterations: usize,
    /// Seconds since the run started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TuneTrace {
    pub records: Vec<TuneRecord>,
}

impl TuneTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&TuneRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TuneRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub lambda: LambdaVector,
    pub trace: TuneTrace,
    pub fitted: FittedModel,
}

/// A tuning run that stopped on an error, with the trace recorded so far.
#[derive(Debug, Error)]
#[error("tuning aborted after {} recorded iterations: {error}", trace.len())]
pub struct TuneFailure {
    #[source]
    pub error: Error,
    pub trace: TuneTrace,
}

impl From<Error> for TuneFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            trace: TuneTrace::default(),
        }
    }
}

fn project(v: &DVector<f64>, bound: f64) -> Vec<f64> {
    v.iter().map(|x| x.max(bound)).collect()
}

struct Tuner<'a> {
    dataset: &'a Dataset,
    base: &'a RegularizedObjective,
    config: &'a TuneConfig,
    trace: TuneTrace,
    start: Instant,
}

impl<'a> Tuner<'a> {
    fn new(
        dataset: &'a Dataset,
        base: &'a RegularizedObjective,
        lambda0: &LambdaVector,
        config: &'a TuneConfig,
    ) -> Result<Self> {
        config.validate()?;
        base.validate(dataset)?;
        if lambda0.len() != base.lambda().len() {
            return Err(Error::DimensionMismatch {
                what: "initial lambda",
                expected: base.lambda().len(),
                found: lambda0.len(),
            });
        }
        if lambda0.as_slice().iter().any(|&l| l < config.lower_bound) {
            return Err(Error::InvalidInput(
                "initial lambda lies below the configured lower bound".into(),
            ));
        }
        if let Some(idx) = &config.indices {
            if idx.is_empty() || idx.iter().any(|&i| i >= dataset.n()) {
                return Err(Error::InvalidInput("tuning index set is empty or out of range".into()));
            }
        }
        Ok(Self {
            dataset,
            base,
            config,
            trace: TuneTrace::default(),
            start: Instant::now(),
        })
    }

    fn refit(&self, lambda: &[f64], warm: Option<&FittedModel>) -> Result<(RegularizedObjective, FittedModel)> {
        let objective = self.base.with_lambda(LambdaVector::new(lambda.to_vec())?)?;
        let warm = if self.config.warm_start {
            warm.map(|f| f.theta())
        } else {
            None
        };
        let fitted = fit(self.dataset, &objective, &self.config.solver, &[], warm)?;
        Ok((objective, fitted))
    }

    fn evaluate(&self, objective: &RegularizedObjective, fitted: &FittedModel) -> Result<GradientEvaluation> {
        approximate_gradient(
            self.dataset,
            fitted,
            objective,
            self.config.evaluation,
            self.config.indices.as_deref(),
        )
    }

    fn record(&mut self, t: usize, lambda: &[f64], acv_mean: f64, gradient_norm: f64, refit_iterations: usize) {
        self.trace.records.push(TuneRecord {
            t,
            lambda: lambda.to_vec(),
            acv_mean,
            gradient_norm,
            refit_iterations,
            wall_time: self.start.elapsed().as_secs_f64(),
        });
    }

    fn fail(self, error: Error) -> TuneFailure {
        TuneFailure {
            error,
            trace: self.trace,
        }
    }
}

/// Projected gradient descent on `λ` using `ḡ`.
///
/// The trace holds the initial evaluation (`t = 0`) and one record per
/// accepted update. With the backtracking rule the run ends early when no step
/// decreases the ACV mean.
pub fn tune_batch(
    dataset: &Dataset,
    objective: &RegularizedObjective,
    lambda0: &LambdaVector,
    config: &TuneConfig,
) -> std::result::Result<TuneOutcome, TuneFailure> {
    let mut tuner = Tuner::new(dataset, objective, lambda0, config)?;
    let mut lambda = lambda0.as_slice().to_vec();
    let (obj, mut fitted) = match tuner.refit(&lambda, None) {
        Ok(v) => v,
        Err(e) => return Err(tuner.fail(e)),
    };
    let mut eval = match tuner.evaluate(&obj, &fitted) {
        Ok(v) => v,
        Err(e) => return Err(tuner.fail(e)),
    };
    tuner.record(0, &lambda, eval.acv_mean, eval.mean_gradient.amax(), fitted.iterations);
    let mut alpha = config.step_rule.initial_alpha();

    for t in 1..=config.max_epochs {
        if eval.mean_gradient.amax() <= config.gradient_tolerance {
            break;
        }
        let lam = DVector::from_column_slice(&lambda);
        let step = match config.step_rule {
            StepRule::Fixed { alpha } => {
                let next = project(&(&lam - &eval.mean_gradient * alpha), config.lower_bound);
                match tuner.refit(&next, Some(&fitted)).and_then(|(o, f)| {
                    let e = tuner.evaluate(&o, &f)?;
                    Ok((next, o, f, e))
                }) {
                    Ok(v) => Some(v),
                    Err(e) => return Err(tuner.fail(e)),
                }
            }
            StepRule::Decay { alpha0 } => {
                let a = alpha0 / ((t - 1) as f64 + 1.0).sqrt();
                let next = project(&(&lam - &eval.mean_gradient * a), config.lower_bound);
                match tuner.refit(&next, Some(&fitted)).and_then(|(o, f)| {
                    let e = tuner.evaluate(&o, &f)?;
                    Ok((next, o, f, e))
                }) {
                    Ok(v) => Some(v),
                    Err(e) => return Err(tuner.fail(e)),
                }
            }
            StepRule::Backtracking {
                shrink,
                armijo,
                growth,
                max_halvings,
                ..
            } => {
                let mut found = None;
                for _ in 0..=max_halvings {
                    let next = project(&(&lam - &eval.mean_gradient * alpha), config.lower_bound);
                    if next == lambda {
                        break;
                    }
                    let moved = DVector::from_column_slice(&next) - &lam;
                    let (o, f) = match tuner.refit(&next, Some(&fitted)) {
                        Ok(v) => v,
                        Err(e) => return Err(tuner.fail(e)),
                    };
                    let e = match tuner.evaluate(&o, &f) {
                        Ok(v) => v,
                        Err(e) => return Err(tuner.fail(e)),
                    };
                    if e.acv_mean <= eval.acv_mean + armijo * eval.mean_gradient.dot(&moved) {
                        alpha *= growth;
                        found = Some((next, o, f, e));
                        break;
                    }
                    alpha *= shrink;
                }
                found
            }
        };
        let Some((next, _, f, e)) = step else { break };
        lambda = next;
        fitted = f;
        eval = e;
        tuner.record(t, &lambda, eval.acv_mean, eval.mean_gradient.amax(), fitted.iterations);
    }
    match LambdaVector::new(lambda) {
        Ok(lambda) => Ok(TuneOutcome {
            lambda,
            trace: tuner.trace,
            fitted,
        }),
        Err(e) => Err(tuner.fail(e)),
    }
}

/// Stochastic descent: one uniformly drawn `g⁽ⁱ⁾` per step with a fixed or
/// `α_t = α₀/√(1+t)` step. `θ̂` is refit every `refit_every` steps; the trace records the ACV
/// mean at each refit.
pub fn tune_stochastic(
    dataset: &Dataset,
    objective: &RegularizedObjective,
    lambda0: &LambdaVector,
    config: &TuneConfig,
) -> std::result::Result<TuneOutcome, TuneFailure> {
    let mut tuner = Tuner::new(dataset, objective, lambda0, config)?;
    let mut stream = Stream::new(config.seed);
    let pool: Vec<usize> = config
        .indices
        .clone()
        .unwrap_or_else(|| (0..dataset.n()).collect());
    let refit_every = config.refit_every.unwrap_or((dataset.n() / 10).max(1));
    let alpha0 = config.step_rule.initial_alpha();
    let decaying = match config.step_rule {
        StepRule::Decay { .. } => true,
        StepRule::Fixed { .. } => false,
        StepRule::Backtracking { .. } => {
            return Err(tuner.fail(Error::InvalidInput(
                "backtracking needs the full ACV mean; use a fixed or decaying step".into(),
            )))
        }
    };

    let mut lambda = lambda0.as_slice().to_vec();
    let (mut obj, mut fitted) = match tuner.refit(&lambda, None) {
        Ok(v) => v,
        Err(e) => return Err(tuner.fail(e)),
    };
    let acv0 = match acv_mean(dataset, &fitted, &obj) {
        Ok(v) => v,
        Err(e) => return Err(tuner.fail(e)),
    };
    tuner.record(0, &lambda, acv0, f64::NAN, fitted.iterations);

    let mut since_refit = 0;
    for t in 0..config.max_epochs {
        let i = pool[stream.index(pool.len())];
        let g = match LeaveOutSolver::new(dataset, &fitted, &obj, DowndateMode::RankOne)
            .and_then(|engine| sample_gradient_with(&engine, dataset, &obj, i, config.evaluation))
        {
            Ok((g, _)) => g,
            Err(e) => return Err(tuner.fail(e)),
        };
        let last_norm = g.amax();
        let alpha = if decaying {
            alpha0 / (t as f64 + 1.0).sqrt()
        } else {
            alpha0
        };
        lambda = project(&(DVector::from_column_slice(&lambda) - g * alpha), config.lower_bound);
        since_refit += 1;
        if since_refit == refit_every || t + 1 == config.max_epochs {
            since_refit = 0;
            match tuner
                .refit(&lambda, Some(&fitted))
                .and_then(|(o, f)| Ok((acv_mean(dataset, &f, &o)?, o, f)))
            {
                Ok((acv, o, f)) => {
                    obj = o;
                    fitted = f;
                    tuner.record(t + 1, &lambda, acv, last_norm, fitted.iterations);
                }
                Err(e) => return Err(tuner.fail(e)),
            }
        }
    }
    match LambdaVector::new(lambda) {
        Ok(lambda) => Ok(TuneOutcome {
            lambda,
            trace: tuner.trace,
            fitted,
        }),
        Err(e) => Err(tuner.fail(e)),
    }
}

fn acv_mean(dataset: &Dataset, fitted: &FittedModel, objective: &RegularizedObjective) -> Result<f64> {
    let report = crate::aloocv::acv_vector(dataset, fitted, objective, &Default::default())?;
    if !report.undefined.is_empty() {
        return Err(Error::EstimatorUndefined {
            indices: report.undefined.iter().map(|u| u.index).collect(),
            reason: "approximate leave-one-out estimate undefined during tuning".into(),
        });
    }
    Ok(report.acv_mean)
}
