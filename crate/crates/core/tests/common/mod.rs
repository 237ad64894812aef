//! Independent reference computations shared by the integration tests and the
//! acceptance suite. Nothing here calls the library's solver or estimators
//! except where the check is explicitly "library vs reference".

#![allow(dead_code)]

use aloocv::aloocv::{acv_vector, AcvOptions, DowndateMode, LeaveOutSolver};
use aloocv::baselines::influence_vector;
use aloocv::data::{self, Stream};
use aloocv::models::{self, sigmoid, softplus, ModelParts};
use aloocv::solver::{fit, loocv_exact, loocv_refits, mean, SolverConfig};
use aloocv::tuner::{approximate_gradient, lambda_gradient_full, EvaluationPoint};
use aloocv::{Dataset, LambdaVector, RegularizedObjective, Sample};
use nalgebra::{DMatrix, DVector};

pub type Check = Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn objective(parts: ModelParts, lambda: Vec<f64>) -> RegularizedObjective {
    RegularizedObjective::new(parts.0, parts.1, LambdaVector::new(lambda).unwrap()).unwrap()
}

pub fn tight() -> SolverConfig {
    SolverConfig::default().with_tolerance(1e-10)
}

/// `{(x=1, y=1), (x=1, y=0)}` with 1-D ridge at `λ = 1`.
pub fn two_point() -> (Dataset, RegularizedObjective) {
    let ds = Dataset::new(vec![
        Sample::from_slice(&[1.0], 1.0),
        Sample::from_slice(&[1.0], 0.0),
    ])
    .unwrap();
    (ds, objective(models::ridge(1).unwrap(), vec![1.0]))
}

pub fn design(ds: &Dataset, exclude: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let keep: Vec<usize> = (0..ds.n()).filter(|i| !exclude.contains(i)).collect();
    let x = DMatrix::from_fn(keep.len(), ds.p(), |r, c| ds.sample(keep[r]).features[c]);
    let y = DVector::from_fn(keep.len(), |r, _| ds.sample(keep[r]).response);
    (x, y)
}

/// Ridge solution `(XᵀX + diag(λ))⁻¹ Xᵀy` via LU on the normal equations.
pub fn ridge_normal_equations(ds: &Dataset, diag: &[f64], exclude: &[usize]) -> DVector<f64> {
    let (x, y) = design(ds, exclude);
    let mut a = x.transpose() * &x;
    for (j, l) in diag.iter().enumerate() {
        a[(j, j)] += l;
    }
    a.lu().solve(&(x.transpose() * y)).expect("normal equations solvable")
}

/// Leave-one-out losses of ridge computed by `n` independent normal-equation solves.
pub fn naive_ridge_loocv(ds: &Dataset, diag: &[f64]) -> Vec<f64> {
    (0..ds.n())
        .map(|i| {
            let theta = ridge_normal_equations(ds, diag, &[i]);
            let s = ds.sample(i);
            0.5 * (s.response - theta.dot(&s.features)).powi(2)
        })
        .collect()
}

pub fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[j] += h;
        b[j] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

pub fn central_hessian(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let k = x.len();
    let eval = |dj: f64, dk: f64, j: usize, l: usize| {
        let mut y = x.clone();
        y[j] += dj;
        y[l] += dk;
        f(&y)
    };
    DMatrix::from_fn(k, k, |j, l| {
        (eval(h, h, j, l) - eval(h, -h, j, l) - eval(-h, h, j, l) + eval(-h, -h, j, l)) / (4.0 * h * h)
    })
}

/// Largest entrywise relative error, with `floor` guarding near-zero entries.
pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Elastic net `Σ½(y − θᵀx)² + λ₁‖θ‖₁ + ½λ₂‖θ‖²` by cyclic coordinate descent.
pub fn coordinate_descent_elastic(ds: &Dataset, l1: f64, l2: f64) -> DVector<f64> {
    let (x, y) = design(ds, &[]);
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut theta = DVector::<f64>::zeros(p);
    let mut resid = y.clone();
    for _ in 0..100_000 {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let old = theta[j];
            let rho = x.column(j).dot(&resid) + col_sq[j] * old;
            let new = rho.signum() * (rho.abs() - l1).max(0.0) / (col_sq[j] + l2);
            if new != old {
                resid.axpy(old - new, &x.column(j), 1.0);
                theta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < 1e-14 {
            break;
        }
    }
    theta
}

// ---------------------------------------------------------------------------
// Oracle checks. Each returns `Err` with a description on mismatch.
// ---------------------------------------------------------------------------

/// Empirical Hessian of the two-point problem without sample 1:
/// `(1/(2−1))·(x² + 1) = 2`.
pub fn hessian_hand_value() -> Check {
    let (ds, obj) = two_point();
    let theta = DVector::from_element(1, 0.37);
    let h = aloocv::empirical_hessian(&ds, Some(1), &theta, &obj).map_err(|e| e.to_string())?;
    ensure(h[(0, 0)] == 2.0, || format!("expected 2.0, got {}", h[(0, 0)]))
}

/// Empirical Hessian of a random logistic problem against central finite
/// differences of the total objective divided by `n`.
pub fn hessian_matches_finite_differences() -> Check {
    let mut s = Stream::new(11);
    let samples = (0..5)
        .map(|_| Sample::new(s.normal_vector(3), if s.uniform() < 0.5 { 0.0 } else { 1.0 }))
        .collect();
    let ds = Dataset::new(samples).unwrap();
    let obj = objective(models::logistic(3, true).unwrap(), vec![0.7]);
    let theta = s.normal_vector(4);
    let h = aloocv::empirical_hessian(&ds, None, &theta, &obj).map_err(|e| e.to_string())?;
    let fd = central_hessian(|t| obj.total(&ds, t, &[]) / 5.0, &theta, 1e-4);
    let err = (h - &fd).amax();
    ensure(err <= 1e-5, || format!("entrywise error {err:e}"))
}

/// Two-point ridge: `θ̂ = 1/(2+λ) = 1/3`, and `1/2` without the second sample.
pub fn two_point_fits() -> Check {
    let (ds, obj) = two_point();
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let loo = fit(&ds, &obj, &tight(), &[1], None).map_err(|e| e.to_string())?;
    ensure((full.theta()[0] - 1.0 / 3.0).abs() < 1e-14, || format!("full fit {}", full.theta()[0]))?;
    ensure((loo.theta()[0] - 0.5).abs() < 1e-14, || format!("leave-out fit {}", loo.theta()[0]))
}

/// Two-point ridge: `CV₁ = ½(0 − ½)² = 0.125`.
pub fn two_point_cv() -> Check {
    let (ds, obj) = two_point();
    let cv = loocv_exact(&ds, &obj, &tight()).map_err(|e| e.to_string())?;
    ensure((cv[1].cv - 0.125).abs() < 1e-14, || format!("CV_1 = {}", cv[1].cv))
}

/// Two-point ridge: the approximate parameter without sample 1 is
/// `1/3 + (1/2)(1/3) = 1/2`, the exact refit.
pub fn two_point_aloocv() -> Check {
    let (ds, obj) = two_point();
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let t = aloocv::aloocv_parameter(&ds, &full, &obj, 1).map_err(|e| e.to_string())?;
    ensure((t[0] - 0.5).abs() < 1e-14, || format!("approximate parameter {}", t[0]))
}

/// Exact LOOCV of random ridge (n=50, p=10) against naive normal-equation refits.
pub fn ridge_loocv_matches_naive() -> Check {
    let ds = data::synth_ridge(50, 10, 5, 0.5, 3).unwrap().dataset;
    let obj = objective(models::ridge(10).unwrap(), vec![0.8]);
    let lib: Vec<f64> = loocv_exact(&ds, &obj, &tight())
        .map_err(|e| e.to_string())?
        .iter()
        .map(|f| f.cv)
        .collect();
    let naive = naive_ridge_loocv(&ds, &[0.8; 10]);
    let diff = (mean(&lib) - mean(&naive)).abs();
    ensure(diff <= 1e-8, || format!("mean CV differs by {diff:e}"))
}

/// Logistic n=60, p=8, λ=1: the approximation is at least 5× closer to the exact
/// leave-one-out parameters than the full fit is.
pub fn logistic_approximation_improves_on_full_fit() -> Check {
    let ds = data::synth_logistic(60, 8, 1.5, 5).unwrap().dataset;
    let obj = objective(models::logistic(8, true).unwrap(), vec![1.0]);
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let refits = loocv_refits(&ds, &obj, &tight(), full.theta()).map_err(|e| e.to_string())?;
    let engine = LeaveOutSolver::new(&ds, &full, &obj, DowndateMode::RankOne).map_err(|e| e.to_string())?;
    let (mut approx_err, mut full_err) = (0.0f64, 0.0f64);
    for r in &refits {
        let t = engine.parameter(r.index).map_err(|e| e.to_string())?;
        approx_err = approx_err.max((r.fitted.theta() - &*t).amax());
        full_err = full_err.max((r.fitted.theta() - full.theta()).amax());
    }
    ensure(approx_err * 5.0 <= full_err, || {
        format!("approximation error {approx_err:e} vs full-fit error {full_err:e}")
    })
}

/// Ridge leave-two-out against the normal equations without both samples.
pub fn ridge_leave_two_out() -> Check {
    let ds = data::synth_ridge(40, 6, 3, 0.2, 8).unwrap().dataset;
    let obj = objective(models::ridge(6).unwrap(), vec![1.5]);
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    for set in [[0usize, 1], [5, 17], [39, 2]] {
        let t = aloocv::aloocv_parameter_q(&ds, &full, &obj, &set).map_err(|e| e.to_string())?;
        let exact = ridge_normal_equations(&ds, &[1.5; 6], &set);
        let err = (&*t - &exact).amax();
        ensure(err <= 1e-7, || format!("set {set:?}: error {err:e}"))?;
    }
    Ok(())
}

/// Mean influence baseline against `L̂ + R̂` assembled directly: per-sample
/// logistic Hessians summed by hand and solved with LU.
pub fn influence_mean_matches_direct_formula() -> Check {
    let n = 40;
    let p = 5;
    let lambda = 0.9;
    let ds = data::synth_logistic(n, p, 1.0, 21).unwrap().dataset;
    let obj = objective(models::logistic(p, true).unwrap(), vec![lambda]);
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let theta = full.theta();
    let aug = |s: &Sample| {
        let mut v = DVector::from_element(p + 1, 1.0);
        v.rows_mut(1, p).copy_from(&s.features);
        v
    };
    let mut reg = DMatrix::<f64>::identity(p + 1, p + 1) * lambda;
    reg[(0, 0)] = 0.0;
    let per: Vec<(f64, DVector<f64>, DMatrix<f64>)> = ds
        .samples()
        .iter()
        .map(|s| {
            let v = aug(s);
            let m = theta.dot(&v);
            let sg = sigmoid(m);
            let loss = softplus(m) - s.response * m;
            (loss, &v * (sg - s.response), &v * v.transpose() * (sg * (1.0 - sg)))
        })
        .collect();
    let sum_h: DMatrix<f64> = per.iter().fold(reg.clone(), |acc, q| acc + &q.2);
    let in_sample = per.iter().map(|q| q.0).sum::<f64>() / n as f64;
    let correction = per
        .iter()
        .map(|(_, g, h)| {
            let h_loo = (&sum_h - h) / (n - 1) as f64;
            g.dot(&h_loo.lu().solve(g).unwrap()) / (n - 1) as f64
        })
        .sum::<f64>()
        / n as f64;
    let lib = mean(&influence_vector(&ds, &full, &obj).map_err(|e| e.to_string())?);
    let err = rel_err(lib, in_sample + correction);
    ensure(err <= 1e-12, || format!("relative error {err:e}"))
}

/// Two-point ridge: `dθ̂/dλ = −1/(2+λ)² = −1/9`.
pub fn two_point_lambda_gradient() -> Check {
    let (ds, obj) = two_point();
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let g = lambda_gradient_full(&ds, &full, &obj).map_err(|e| e.to_string())?;
    let closed = -1.0 / 9.0;
    ensure((g[(0, 0)] - closed).abs() < 1e-14, || format!("got {}", g[(0, 0)]))
}

/// Diagonal ridge p=5: `∇λθ̂` against central differences of refits at 10 random λ.
pub fn ridge_lambda_gradient_matches_refits() -> Check {
    let p = 5;
    let ds = data::synth_ridge(40, p, 3, 0.3, 2).unwrap().dataset;
    let base = objective(models::ridge_diagonal(p).unwrap(), vec![1.0; p]);
    let cfg = SolverConfig::default().with_tolerance(1e-12);
    let mut s = Stream::new(99);
    for _ in 0..10 {
        let lambda: Vec<f64> = (0..p).map(|_| 0.2 + 4.0 * s.uniform()).collect();
        let obj = base.with_lambda(LambdaVector::new(lambda.clone()).unwrap()).unwrap();
        let full = fit(&ds, &obj, &cfg, &[], None).map_err(|e| e.to_string())?;
        let grad = lambda_gradient_full(&ds, &full, &obj).map_err(|e| e.to_string())?;
        let fd = DMatrix::from_fn(p, p, |_, _| 0.0);
        let mut fd = fd;
        for m in 0..p {
            let h = 1e-4 * lambda[m];
            let at = |delta: f64| {
                let mut l = lambda.clone();
                l[m] += delta;
                ridge_normal_equations(&ds, &l, &[])
            };
            fd.set_column(m, &((at(h) - at(-h)) / (2.0 * h)));
        }
        let err = max_rel(&grad, &fd, fd.amax() * 1e-3);
        ensure(err <= 1e-4, || format!("λ = {lambda:?}: relative error {err:e}"))?;
    }
    Ok(())
}

/// Exact `CV̄(λ)` of diagonal ridge through naive refits.
pub fn exact_cv_mean(ds: &Dataset, lambda: &[f64]) -> f64 {
    mean(&naive_ridge_loocv(ds, lambda))
}

/// Diagonal ridge p=5: `ḡ` against central differences of exact `CV̄(λ)` at
/// 10 random λ.
pub fn ridge_cv_gradient_matches_refits() -> Check {
    let p = 5;
    let ds = data::synth_ridge(40, p, 3, 0.3, 4).unwrap().dataset;
    let base = objective(models::ridge_diagonal(p).unwrap(), vec![1.0; p]);
    let cfg = SolverConfig::default().with_tolerance(1e-12);
    let mut s = Stream::new(7);
    for _ in 0..10 {
        let lambda: Vec<f64> = (0..p).map(|_| 0.2 + 4.0 * s.uniform()).collect();
        let obj = base.with_lambda(LambdaVector::new(lambda.clone()).unwrap()).unwrap();
        let full = fit(&ds, &obj, &cfg, &[], None).map_err(|e| e.to_string())?;
        let g = approximate_gradient(&ds, &full, &obj, EvaluationPoint::Approximate, None)
            .map_err(|e| e.to_string())?
            .mean_gradient;
        let fd = DVector::from_fn(p, |m, _| {
            let h = 1e-4 * lambda[m];
            let at = |delta: f64| {
                let mut l = lambda.clone();
                l[m] += delta;
                exact_cv_mean(&ds, &l)
            };
            (at(h) - at(-h)) / (2.0 * h)
        });
        let err = (&g - &fd).amax() / fd.amax();
        ensure(err <= 1e-3, || format!("λ = {lambda:?}: relative error {err:e}"))?;
    }
    Ok(())
}

/// Elastic net: each component of `ḡ` has the sign of the central difference
/// of the ACV mean.
pub fn elastic_gradient_signs() -> Check {
    let p = 10;
    let ds = data::synth_elastic(100, p, 1.0, 13).unwrap().dataset;
    let cfg = SolverConfig::default().with_tolerance(1e-11);
    let acv_mean = |l: &[f64]| -> Result<f64, String> {
        let obj = objective(models::elastic_net(p).unwrap(), l.to_vec());
        let full = fit(&ds, &obj, &cfg, &[], None).map_err(|e| e.to_string())?;
        Ok(acv_vector(&ds, &full, &obj, &AcvOptions::default())
            .map_err(|e| e.to_string())?
            .acv_mean)
    };
    for lambda in [[5.0, 2.0], [40.0, 10.0], [150.0, 50.0]] {
        let obj = objective(models::elastic_net(p).unwrap(), lambda.to_vec());
        let full = fit(&ds, &obj, &cfg, &[], None).map_err(|e| e.to_string())?;
        let g = approximate_gradient(&ds, &full, &obj, EvaluationPoint::Approximate, None)
            .map_err(|e| e.to_string())?
            .mean_gradient;
        for m in 0..2 {
            let h = 1e-5 * lambda[m];
            let mut up = lambda;
            let mut down = lambda;
            up[m] += h;
            down[m] -= h;
            let fd = (acv_mean(&up)? - acv_mean(&down)?) / (2.0 * h);
            ensure(g[m].signum() == fd.signum(), || {
                format!("λ = {lambda:?}, component {m}: ḡ = {:e}, difference = {fd:e}", g[m])
            })?;
        }
    }
    Ok(())
}

/// The finite-difference contract for one family at random points.
pub fn family_derivatives(parts: ModelParts, p: usize, classification: bool, seed: u64) -> Check {
    let (loss, regs) = parts;
    let k = loss.num_params();
    let mut s = Stream::new(seed);
    for _ in 0..20 {
        let y = if classification {
            f64::from(u8::from(s.uniform() < 0.5))
        } else {
            s.normal()
        };
        let sample = Sample::new(s.normal_vector(p), y);
        let theta = s.normal_vector(k);
        let fd_g = central_gradient(|t| loss.loss(&sample, t), &theta, 1e-6);
        let g = loss.grad(&sample, &theta);
        let err = (&g - &fd_g).amax() / g.amax().max(1e-3);
        ensure(err <= 1e-6, || format!("loss gradient relative error {err:e}"))?;
        let fd_h = DMatrix::from_fn(k, k, |_, _| 0.0);
        let mut fd_h = fd_h;
        for j in 0..k {
            let h = 1e-6;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[j] += h;
            b[j] -= h;
            fd_h.set_column(j, &((loss.grad(&sample, &a) - loss.grad(&sample, &b)) / (2.0 * h)));
        }
        let hess = loss.hess(&sample, &theta);
        let err = (&hess - &fd_h).amax() / hess.amax().max(1e-3);
        ensure(err <= 1e-6, || format!("loss Hessian relative error {err:e}"))?;
        for r in regs.iter() {
            // Away from kinks: nudge the point so no coordinate sits near zero.
            let t = theta.map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
            let fd = central_gradient(|u| r.value(u), &t, 1e-6);
            let err = (r.grad(&t) - &fd).amax();
            ensure(err <= 1e-6, || format!("{} gradient error {err:e}", r.name()))?;
        }
    }
    Ok(())
}

pub fn all_family_derivatives() -> Check {
    family_derivatives(models::ridge_diagonal(4).unwrap(), 4, false, 1)?;
    family_derivatives(models::logistic(4, true).unwrap(), 4, true, 2)?;
    family_derivatives(models::logistic(3, false).unwrap(), 3, true, 3)?;
    family_derivatives(models::elastic_net(4).unwrap(), 4, false, 4)
}

/// Elastic net p=20: the solver's active set equals coordinate descent's.
pub fn elastic_active_set_matches_coordinate_descent() -> Check {
    let p = 20;
    let ds = data::synth_elastic(100, p, 1.0, 17).unwrap().dataset;
    let (x, y) = design(&ds, &[]);
    let lmax = (x.transpose() * y).amax();
    let (l1, l2) = (0.3 * lmax, 2.0);
    let obj = objective(models::elastic_net(p).unwrap(), vec![l1, l2]);
    let full = fit(&ds, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let cd = coordinate_descent_elastic(&ds, l1, l2);
    let lib_support: Vec<usize> = (0..p).filter(|&j| full.theta()[j] != 0.0).collect();
    let cd_support: Vec<usize> = (0..p).filter(|&j| cd[j] != 0.0).collect();
    ensure(lib_support == cd_support, || {
        format!("solver support {lib_support:?} vs coordinate descent {cd_support:?}")
    })?;
    ensure(!cd_support.is_empty() && cd_support.len() < p, || {
        format!("degenerate support {cd_support:?}")
    })?;
    let err = (full.theta() - &cd).amax();
    ensure(err <= 1e-7, || format!("coefficients differ by {err:e}"))
}

/// Noiseless ridge data with `λ → 0` recovers `θ*`.
pub fn noiseless_recovery() -> Check {
    let synth = data::synth_ridge(80, 20, 20, 0.0, 6).unwrap();
    let obj = objective(models::ridge(20).unwrap(), vec![1e-12]);
    let full = fit(&synth.dataset, &obj, &tight(), &[], None).map_err(|e| e.to_string())?;
    let err = (full.theta() - &synth.theta_star).amax();
    ensure(err <= 1e-6, || format!("recovery error {err:e}"))
}

/// Fraction of zero coordinates in elastic-net `θ*` over 200 seeds at p=50.
pub fn elastic_zero_fraction() -> Check {
    let zeros: usize = (0..200)
        .map(|seed| {
            data::synth_elastic(2, 50, 1.0, seed)
                .unwrap()
                .theta_star
                .iter()
                .filter(|v| **v == 0.0)
                .count()
        })
        .sum();
    let frac = zeros as f64 / (200.0 * 50.0);
    ensure((0.45..=0.55).contains(&frac), || format!("zero fraction {frac}"))
}

/// Save then load reproduces a dataset exactly.
pub fn csv_round_trip() -> Check {
    let ds = data::synth_ridge(25, 4, 2, 0.1, 12).unwrap().dataset;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("d.csv");
    data::save_csv(&ds, &path, "y").map_err(|e| e.to_string())?;
    let back = data::load_csv(&path, "y", None).map_err(|e| e.to_string())?;
    ensure(back == ds, || "round trip changed the dataset".into())
}

/// Elastic net from `λ = (0, 0)`: stochastic and batch tuning end within 10%
/// ACV mean of each other, for each of 5 seeds.
pub fn stochastic_agrees_with_batch() -> Check {
    use aloocv::tuner::{tune_batch, tune_stochastic, StepRule, TuneConfig};
    let p = 10;
    for seed in 0..5 {
        let ds = data::synth_elastic(100, p, 1.0, 100 + seed).unwrap().dataset;
        let obj = objective(models::elastic_net(p).unwrap(), vec![0.0, 0.0]);
        let lambda0 = LambdaVector::new(vec![0.0, 0.0]).unwrap();
        let batch_cfg = TuneConfig {
            step_rule: StepRule::backtracking(1e3),
            max_epochs: 40,
            ..TuneConfig::default()
        };
        let batch = tune_batch(&ds, &obj, &lambda0, &batch_cfg).map_err(|e| e.to_string())?;
        let sgd_cfg = TuneConfig {
            step_rule: StepRule::Decay { alpha0: 10.0 },
            max_epochs: 400,
            seed,
            ..TuneConfig::default()
        };
        let sgd = tune_stochastic(&ds, &obj, &lambda0, &sgd_cfg).map_err(|e| e.to_string())?;
        let b = batch.trace.last().unwrap().acv_mean;
        let s = sgd.trace.last().unwrap().acv_mean;
        ensure(rel_err(s, b) <= 0.1, || {
            format!("seed {seed}: stochastic {s} vs batch {b} (λ {:?} vs {:?})", sgd.lambda, batch.lambda)
        })?;
    }
    Ok(())
}

pub type Oracle = (&'static str, fn() -> Check);

/// Every reference check, in a fixed order.
pub fn oracle_suite() -> Vec<Oracle> {
    vec![
        ("empirical Hessian hand value", hessian_hand_value),
        ("empirical Hessian vs finite differences", hessian_matches_finite_differences),
        ("two-point closed-form fits", two_point_fits),
        ("two-point leave-one-out loss", two_point_cv),
        ("two-point approximate parameter", two_point_aloocv),
        ("ridge LOOCV vs naive refits", ridge_loocv_matches_naive),
        ("logistic approximation vs exact refits", logistic_approximation_improves_on_full_fit),
        ("ridge leave-two-out vs normal equations", ridge_leave_two_out),
        ("influence mean vs direct formula", influence_mean_matches_direct_formula),
        ("two-point lambda gradient", two_point_lambda_gradient),
        ("lambda gradient vs refit differences", ridge_lambda_gradient_matches_refits),
        ("approximate gradient vs exact CV differences", ridge_cv_gradient_matches_refits),
        ("elastic-net gradient signs", elastic_gradient_signs),
        ("family derivatives vs finite differences", all_family_derivatives),
        ("elastic-net support vs coordinate descent", elastic_active_set_matches_coordinate_descent),
        ("noiseless recovery", noiseless_recovery),
        ("elastic-net zero fraction", elastic_zero_fraction),
        ("CSV round trip", csv_round_trip),
        ("stochastic vs batch tuning", stochastic_agrees_with_batch),
    ]
}
