//! Regularized empirical risk minimization.
//!
//! Smooth objectives are minimized by Newton's method with Armijo backtracking.
//! Objectives with an l1 term alternate proximal gradient sweeps, which locate
//! the support, with Newton polishing restricted to that support under fixed
//! signs. Convergence is certified by the gradient (or subgradient optimality
//! residual) falling below `gradient_tolerance`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{scatter, submatrix, subvector, SpdFactor};
use crate::model::{Dataset, LambdaVector, ParameterVector, RegularizedObjective};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Bound on the ∞-norm of the total-objective gradient.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub armijo: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub prox: ProxConfig,
}

/// Settings for the proximal-gradient phase of l1 problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxConfig {
    /// Initial step; `None` uses `1/‖H‖_F` at the starting point.
    pub initial_step: Option<f64>,
    /// Proximal iterations per active-set round.
    pub max_iterations: usize,
    pub max_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-10,
            max_iterations: 100,
            armijo: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            prox: ProxConfig::default(),
        }
    }
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            initial_step: None,
            max_iterations: 2000,
            max_rounds: 30,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.gradient_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.gradient_tolerance.is_nan() || self.gradient_tolerance <= 0.0 {
            return Err(Error::InvalidInput("gradient tolerance must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be ≥ 1".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidInput("backtrack factor must lie in (0, 1)".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidInput("Armijo constant must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub theta_hat: ParameterVector,
    pub lambda: LambdaVector,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Nonzero coordinates (plus unpenalized ones) for l1 problems.
    pub active_set: Option<Vec<usize>>,
    /// Samples left out of this fit.
    pub excluded: Vec<usize>,
    /// Total objective after each accepted step, starting with the initial point.
    pub objective_history: Vec<f64>,
}

impl FittedModel {
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// Coordinates the leave-out machinery works on: the active set for l1
    /// problems, otherwise every coordinate.
    pub fn working_set(&self) -> Vec<usize> {
        match &self.active_set {
            Some(a) => a.clone(),
            None => (0..self.theta_hat.len()).collect(),
        }
    }
}

/// Minimizes `Σ_{j∉exclude} ℓ(z_j; θ) + λᵀ r(θ)`.
pub fn fit(
    dataset: &Dataset,
    objective: &RegularizedObjective,
    config: &SolverConfig,
    exclude: &[usize],
    warm_start: Option<&DVector<f64>>,
) -> Result<FittedModel> {
    config.validate()?;
    objective.validate(dataset)?;
    dataset.check_exclusion(exclude)?;
    let k = objective.num_params();
    let theta0 = match warm_start {
        Some(w) => {
            objective.check_theta(w)?;
            w.clone()
        }
        None => DVector::zeros(k),
    };
    let mut state = Run {
        dataset,
        objective,
        config,
        exclude,
        history: Vec::new(),
        iterations: 0,
    };
    let outcome = match objective.l1_weights() {
        None => state.newton(theta0),
        Some(w) => state.active_set(theta0, &w),
    };
    let (theta, residual, active) = outcome;
    let converged = residual <= config.gradient_tolerance;
    let fitted = FittedModel {
        theta_hat: ParameterVector::new(theta)?,
        lambda: objective.lambda().clone(),
        converged,
        iterations: state.iterations,
        final_gradient_norm: residual,
        active_set: active,
        excluded: exclude.to_vec(),
        objective_history: state.history,
    };
    if converged {
        Ok(fitted)
    } else {
        Err(Error::NotConverged {
            iterations: fitted.iterations,
            gradient_norm: residual,
            partial: Box::new(fitted),
        })
    }
}

/// One leave-one-out refit and the loss it assigns to the held-out sample.
#[derive(Debug, Clone)]
pub struct LooFit {
    pub index: usize,
    pub fitted: FittedModel,
    pub cv: f64,
}

/// Exact leave-one-out cross validation: `n` refits warm-started at the full fit.
pub fn loocv_exact(
    dataset: &Dataset,
    objective: &RegularizedObjective,
    config: &SolverConfig,
) -> Result<Vec<LooFit>> {
    let full = fit(dataset, objective, config, &[], None)?;
    loocv_refits(dataset, objective, config, full.theta())
}

/// The refit half of [`loocv_exact`], warm-started from `warm`.
pub fn loocv_refits(
    dataset: &Dataset,
    objective: &RegularizedObjective,
    config: &SolverConfig,
    warm: &DVector<f64>,
) -> Result<Vec<LooFit>> {
    (0..dataset.n())
        .into_par_iter()
        .map(|i| {
            let fitted = fit(dataset, objective, config, &[i], Some(warm)).map_err(|e| {
                Error::LeaveOut {
                    index: i,
                    source: Box::new(e),
                }
            })?;
            let cv = objective.loss().loss(dataset.sample(i), fitted.theta());
            Ok(LooFit {
                index: i,
                fitted,
                cv,
            })
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation over `√n`.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (var / n).sqrt()
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Directional derivatives this small relative to the objective are rounding noise.
fn negligible(slope: f64, f: f64) -> bool {
    -slope <= 1e-13 * (1.0 + f.abs())
}

struct Run<'a> {
    dataset: &'a Dataset,
    objective: &'a RegularizedObjective,
    config: &'a SolverConfig,
    exclude: &'a [usize],
    history: Vec<f64>,
    iterations: usize,
}

impl Run<'_> {
    fn total(&self, theta: &DVector<f64>) -> f64 {
        self.objective.total(self.dataset, theta, self.exclude)
    }

    fn smooth_total(&self, theta: &DVector<f64>) -> f64 {
        self.objective.smooth_total(self.dataset, theta, self.exclude)
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.objective.smooth_gradient(self.dataset, theta, self.exclude)
    }

    /// Newton with backtracking on a smooth objective. Returns `(θ, ‖∇‖∞, None)`.
    fn newton(&mut self, mut theta: DVector<f64>) -> (DVector<f64>, f64, Option<Vec<usize>>) {
        let mut f = self.total(&theta);
        self.history.push(f);
        let mut g = self.gradient(&theta);
        while inf_norm(&g) > self.config.gradient_tolerance
            && self.iterations < self.config.max_iterations
        {
            let direction = match self
                .objective
                .total_hessian(self.dataset, &theta, self.exclude)
                .ok()
                .and_then(SpdFactor::new)
            {
                Some(factor) => -factor.solve(&g),
                None => -&g,
            };
            let direction = if direction.dot(&g) < 0.0 { direction } else { -&g };
            match self.line_search(&theta, f, &g, &direction, |run, t| run.total(t)) {
                Some((next, f_next)) => {
                    theta = next;
                    f = f_next;
                }
                None => break,
            }
            self.iterations += 1;
            self.history.push(f);
            g = self.gradient(&theta);
        }
        let residual = inf_norm(&g);
        (theta, residual, None)
    }

    fn line_search(
        &self,
        theta: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
        direction: &DVector<f64>,
        eval: impl Fn(&Self, &DVector<f64>) -> f64,
    ) -> Option<(DVector<f64>, f64)> {
        let slope = g.dot(direction);
        let mut t = 1.0;
        for _ in 0..=self.config.max_backtracks {
            let cand = theta + direction * t;
            let f_cand = eval(self, &cand);
            if f_cand.is_finite() {
                if f_cand <= f + self.config.armijo * t * slope {
                    return Some((cand, f_cand));
                }
                if t == 1.0 && negligible(slope, f) && f_cand <= f + 1e-13 * (1.0 + f.abs()) {
                    return Some((cand, f_cand));
                }
            }
            t *= self.config.backtrack_factor;
        }
        None
    }

    fn active_set(
        &mut self,
        mut theta: DVector<f64>,
        weights: &DVector<f64>,
    ) -> (DVector<f64>, f64, Option<Vec<usize>>) {
        self.history.push(self.total(&theta));
        let mut step = self.initial_prox_step(&theta);
        for _ in 0..self.config.prox.max_rounds {
            step = self.prox_gradient(&mut theta, weights, step);
            self.polish(&mut theta, weights);
            if self.l1_residual(&theta, weights) <= self.config.gradient_tolerance {
                break;
            }
            if self.iterations >= self.config.max_iterations * self.config.prox.max_rounds {
                break;
            }
        }
        let residual = self.l1_residual(&theta, weights);
        let active = active_coordinates(&theta, weights);
        (theta, residual, Some(active))
    }

    fn initial_prox_step(&self, theta: &DVector<f64>) -> f64 {
        if let Some(s) = self.config.prox.initial_step {
            return s;
        }
        match self.objective.total_hessian(self.dataset, theta, self.exclude) {
            Ok(h) if h.norm() > 0.0 => 1.0 / h.norm(),
            _ => 1.0,
        }
    }

    /// Proximal gradient (ISTA) with backtracking on the smooth part. Stops once
    /// the support has been stable for a while and the optimality residual is small.
    fn prox_gradient(&mut self, theta: &mut DVector<f64>, weights: &DVector<f64>, mut step: f64) -> f64 {
        let mut stable = 0;
        let mut support = active_coordinates(theta, weights);
        for _ in 0..self.config.prox.max_iterations {
            let f_s = self.smooth_total(theta);
            let g = self.gradient(theta);
            let mut accepted = None;
            for _ in 0..=self.config.max_backtracks {
                let cand = soft_threshold(&(&*theta - &g * step), &(weights * step));
                let diff = &cand - &*theta;
                let f_cand = self.smooth_total(&cand);
                if f_cand <= f_s + g.dot(&diff) + diff.norm_squared() / (2.0 * step) {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            let Some(cand) = accepted else { break };
            let moved = inf_norm(&(&cand - &*theta));
            *theta = cand;
            self.iterations += 1;
            self.history.push(self.total(theta));
            let new_support = active_coordinates(theta, weights);
            if new_support == support {
                stable += 1;
            } else {
                stable = 0;
                support = new_support;
            }
            if moved == 0.0 || (stable >= 10 && self.l1_residual(theta, weights) <= 1e-6) {
                break;
            }
            step *= 1.5;
        }
        step
    }

    /// Newton on the current support with signs held fixed. A coordinate that
    /// would cross zero is clamped to zero and dropped.
    fn polish(&mut self, theta: &mut DVector<f64>, weights: &DVector<f64>) {
        let k = theta.len();
        for _ in 0..self.config.max_iterations {
            let active = active_coordinates(theta, weights);
            if active.is_empty() {
                return;
            }
            let signs = DVector::from_fn(k, |j, _| {
                if weights[j] > 0.0 {
                    theta[j].signum() * weights[j]
                } else {
                    0.0
                }
            });
            let g_full = self.gradient(theta) + &signs;
            let g = subvector(&g_full, &active);
            if inf_norm(&g) <= self.config.gradient_tolerance {
                return;
            }
            let h = match self.objective.total_hessian(self.dataset, theta, self.exclude) {
                Ok(h) => h,
                Err(_) => return,
            };
            let d_sub = match SpdFactor::new(submatrix(&h, &active)) {
                Some(f) => -f.solve(&g),
                None => -&g,
            };
            let d_sub = if d_sub.dot(&g) < 0.0 { d_sub } else { -&g };
            let direction = scatter(&d_sub, &active, k);

            // Largest step keeping every penalized coordinate on its side of zero.
            let mut t_max = 1.0;
            let mut blocking = None;
            for &j in &active {
                if weights[j] > 0.0 && theta[j] * direction[j] < 0.0 {
                    let t = -theta[j] / direction[j];
                    if t < t_max {
                        t_max = t;
                        blocking = Some(j);
                    }
                }
            }
            let f = self.total(theta);
            let slope = g_full.dot(&direction);
            let mut t = t_max;
            let mut accepted = false;
            for _ in 0..=self.config.max_backtracks {
                let mut cand = &*theta + &direction * t;
                if t == t_max {
                    if let Some(j) = blocking {
                        cand[j] = 0.0;
                    }
                }
                let f_cand = self.total(&cand);
                let ok = f_cand <= f + self.config.armijo * t * slope
                    || (t == 1.0 && negligible(slope, f) && f_cand <= f + 1e-13 * (1.0 + f.abs()));
                if ok {
                    *theta = cand;
                    self.iterations += 1;
                    self.history.push(f_cand);
                    accepted = true;
                    break;
                }
                t *= self.config.backtrack_factor;
            }
            if !accepted {
                return;
            }
        }
    }

    /// Subgradient optimality residual of the l1-regularized objective.
    fn l1_residual(&self, theta: &DVector<f64>, weights: &DVector<f64>) -> f64 {
        let g = self.gradient(theta);
        (0..theta.len())
            .map(|j| {
                if weights[j] == 0.0 {
                    g[j].abs()
                } else if theta[j] != 0.0 {
                    (g[j] + weights[j] * theta[j].signum()).abs()
                } else {
                    (g[j].abs() - weights[j]).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Nonzero coordinates plus coordinates without an l1 weight.
fn active_coordinates(theta: &DVector<f64>, weights: &DVector<f64>) -> Vec<usize> {
    (0..theta.len())
        .filter(|&j| theta[j] != 0.0 || weights[j] == 0.0)
        .collect()
}

fn soft_threshold(v: &DVector<f64>, thresholds: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |j, _| {
        let a = v[j].abs() - thresholds[j];
        if a > 0.0 {
            a * v[j].signum()
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LambdaVector, Sample};
    use crate::models;

    fn two_point() -> (Dataset, RegularizedObjective) {
        let ds = Dataset::new(vec![
            Sample::from_slice(&[1.0], 1.0),
            Sample::from_slice(&[1.0], 0.0),
        ])
        .unwrap();
        let (loss, regs) = models::ridge_diagonal(1).unwrap();
        let obj = RegularizedObjective::new(loss, regs, LambdaVector::new(vec![1.0]).unwrap()).unwrap();
        (ds, obj)
    }

    #[test]
    fn one_dimensional_ridge_closed_form() {
        let (ds, obj) = two_point();
        let cfg = SolverConfig::default();
        // stationarity 3θ − 1 = 0
        let full = fit(&ds, &obj, &cfg, &[], None).unwrap();
        assert!((full.theta()[0] - 1.0 / 3.0).abs() < 1e-14);
        // only (1, 1) remains: 2θ − 1 = 0
        let loo = fit(&ds, &obj, &cfg, &[1], None).unwrap();
        assert!((loo.theta()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn warm_start_at_minimizer_is_immediate() {
        let (ds, obj) = two_point();
        let cfg = SolverConfig::default();
        let warm = DVector::from_element(1, 1.0 / 3.0);
        let f = fit(&ds, &obj, &cfg, &[], Some(&warm)).unwrap();
        assert!(f.iterations <= 2);
        assert!((f.theta()[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn loocv_of_two_point_ridge() {
        let (ds, obj) = two_point();
        let cv = loocv_exact(&ds, &obj, &SolverConfig::default()).unwrap();
        // θ̂(z^{n\1}) = 1/2, so ½(0 − ½)² = 0.125
        assert!((cv[1].cv - 0.125).abs() < 1e-14);
        // θ̂(z^{n\0}) = 0, so ½(1 − 0)² = 0.5
        assert!((cv[0].cv - 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_convergence_is_reported() {
        let (ds, obj) = two_point();
        let cfg = SolverConfig {
            max_iterations: 1,
            gradient_tolerance: 1e-300,
            ..SolverConfig::default()
        };
        match fit(&ds, &obj, &cfg, &[], None) {
            Err(Error::NotConverged { partial, .. }) => assert!(!partial.converged),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let (ds, obj) = two_point();
        let cfg = SolverConfig {
            gradient_tolerance: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(fit(&ds, &obj, &cfg, &[], None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn exclusion_out_of_range_rejected() {
        let (ds, obj) = two_point();
        assert!(fit(&ds, &obj, &SolverConfig::default(), &[2], None).is_err());
    }

    #[test]
    fn standard_error_is_population_sd_over_root_n() {
        let v = [1.0, 2.0, 3.0, 4.0];
        // population variance 1.25
        assert!((standard_error(&v) - (1.25f64 / 4.0).sqrt()).abs() < 1e-15);
    }
}
