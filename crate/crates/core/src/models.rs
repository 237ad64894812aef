//! Concrete losses and regularizers: diagonal ridge, logistic regression and
//! elastic net.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossModel, Regularizer, RegularizerSpec, Sample, Smoothness};

/// Squared-error loss `½(y − θᵀx)²`.
#[derive(Debug, Clone)]
pub struct SquaredError {
    p: usize,
}

impl SquaredError {
    pub fn new(p: usize) -> Self {
        Self { p }
    }

    fn residual(sample: &Sample, theta: &DVector<f64>) -> f64 {
        sample.response - theta.dot(&sample.features)
    }
}

impl LossModel for SquaredError {
    fn name(&self) -> &str {
        "squared_error"
    }

    fn num_features(&self) -> usize {
        self.p
    }

    fn num_params(&self) -> usize {
        self.p
    }

    fn loss(&self, sample: &Sample, theta: &DVector<f64>) -> f64 {
        let r = Self::residual(sample, theta);
        0.5 * r * r
    }

    fn grad(&self, sample: &Sample, theta: &DVector<f64>) -> DVector<f64> {
        &sample.features * -Self::residual(sample, theta)
    }

    fn hess(&self, sample: &Sample, _theta: &DVector<f64>) -> DMatrix<f64> {
        &sample.features * sample.features.transpose()
    }

    fn hess_rank_one(&self, sample: &Sample, _theta: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        Some((1.0, sample.features.clone()))
    }

    fn has_constant_hessian(&self) -> bool {
        true
    }
}

/// Binary cross entropy of `sigmoid(θ₀ + θᵀx)` against a label in `{0, 1}`.
///
/// With an intercept, `θ[0]` is `θ₀` and the weights follow.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    p: usize,
    intercept: bool,
}

impl LogisticLoss {
    pub fn new(p: usize, intercept: bool) -> Self {
        Self { p, intercept }
    }

    fn augmented(&self, sample: &Sample) -> DVector<f64> {
        if self.intercept {
            let mut x = DVector::zeros(self.p + 1);
            x[0] = 1.0;
            x.rows_mut(1, self.p).copy_from(&sample.features);
            x
        } else {
            sample.features.clone()
        }
    }

    fn margin(&self, sample: &Sample, theta: &DVector<f64>) -> f64 {
        if self.intercept {
            theta[0] + theta.rows(1, self.p).dot(&sample.features)
        } else {
            theta.dot(&sample.features)
        }
    }
}

/// `log(1 + e^m)` without overflow.
pub fn softplus(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

impl LossModel for LogisticLoss {
    fn name(&self) -> &str {
        "logistic"
    }

    fn num_features(&self) -> usize {
        self.p
    }

    fn num_params(&self) -> usize {
        self.p + usize::from(self.intercept)
    }

    fn loss(&self, sample: &Sample, theta: &DVector<f64>) -> f64 {
        // softplus(m) − y·m rewritten to avoid cancellation at large |m|
        let m = self.margin(sample, theta);
        let y = sample.response;
        y * softplus(-m) + (1.0 - y) * softplus(m)
    }

    fn grad(&self, sample: &Sample, theta: &DVector<f64>) -> DVector<f64> {
        let m = self.margin(sample, theta);
        self.augmented(sample) * (sigmoid(m) - sample.response)
    }

    fn hess(&self, sample: &Sample, theta: &DVector<f64>) -> DMatrix<f64> {
        let (c, v) = self.hess_rank_one(sample, theta).expect("rank one");
        &v * v.transpose() * c
    }

    fn hess_rank_one(&self, sample: &Sample, theta: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let s = sigmoid(self.margin(sample, theta));
        Some((s * (1.0 - s), self.augmented(sample)))
    }

    fn check_response(&self, response: f64) -> Result<()> {
        if response == 0.0 || response == 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "logistic labels must be 0 or 1, got {response}"
            )))
        }
    }
}

/// `½ Σ_{j ≥ start} θ_j²`; coordinates before `start` (intercepts) are free.
#[derive(Debug, Clone)]
pub struct HalfSquaredNorm {
    pub start: usize,
}

impl Regularizer for HalfSquaredNorm {
    fn name(&self) -> &str {
        "half_squared_l2"
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.rows_range(self.start..).norm_squared()
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = theta.clone();
        g.rows_range_mut(..self.start).fill(0.0);
        g
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let k = theta.len();
        DMatrix::from_fn(k, k, |r, c| if r == c && r >= self.start { 1.0 } else { 0.0 })
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth
    }

    fn has_constant_hessian(&self) -> bool {
        true
    }
}

/// `½ θ_index²`, one per coordinate in the diagonal ridge model.
#[derive(Debug, Clone)]
pub struct HalfSquaredCoordinate {
    pub index: usize,
}

impl Regularizer for HalfSquaredCoordinate {
    fn name(&self) -> &str {
        "half_squared_coordinate"
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta[self.index] * theta[self.index]
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        g[self.index] = theta[self.index];
        g
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let k = theta.len();
        let mut h = DMatrix::zeros(k, k);
        h[(self.index, self.index)] = 1.0;
        h
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Smooth
    }

    fn has_constant_hessian(&self) -> bool {
        true
    }
}

/// `Σ_{j ≥ start} |θ_j|`.
#[derive(Debug, Clone)]
pub struct L1Norm {
    pub start: usize,
}

impl Regularizer for L1Norm {
    fn name(&self) -> &str {
        "l1"
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        theta.rows_range(self.start..).iter().map(|v| v.abs()).sum()
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(theta.len(), |j, _| {
            if j < self.start || theta[j] == 0.0 {
                0.0
            } else {
                theta[j].signum()
            }
        })
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(theta.len(), theta.len())
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::L1
    }

    fn l1_mask(&self, k: usize) -> Option<DVector<f64>> {
        Some(DVector::from_fn(k, |j, _| if j >= self.start { 1.0 } else { 0.0 }))
    }

    fn has_constant_hessian(&self) -> bool {
        true
    }
}

pub type ModelParts = (Arc<dyn LossModel>, RegularizerSpec);

/// Squared error with one weight per coordinate: `r_m(θ) = ½θ_m²`, `M = p`.
pub fn ridge_diagonal(p: usize) -> Result<ModelParts> {
    check_p(p)?;
    let regs = (0..p)
        .map(|index| Arc::new(HalfSquaredCoordinate { index }) as Arc<dyn Regularizer>)
        .collect();
    Ok((Arc::new(SquaredError::new(p)), RegularizerSpec::new(regs)))
}

/// Squared error with a single `½‖θ‖²` penalty, `M = 1`.
pub fn ridge(p: usize) -> Result<ModelParts> {
    check_p(p)?;
    Ok((
        Arc::new(SquaredError::new(p)),
        RegularizerSpec::new(vec![Arc::new(HalfSquaredNorm { start: 0 })]),
    ))
}

/// Logistic regression with `r₁(θ) = ½‖θ‖²` (intercept unpenalized), `M = 1`.
pub fn logistic(p: usize, with_intercept: bool) -> Result<ModelParts> {
    check_p(p)?;
    let start = usize::from(with_intercept);
    Ok((
        Arc::new(LogisticLoss::new(p, with_intercept)),
        RegularizerSpec::new(vec![Arc::new(HalfSquaredNorm { start })]),
    ))
}

/// Squared error with `r₁ = ‖θ‖₁` and `r₂ = ½‖θ‖²`, `M = 2`.
pub fn elastic_net(p: usize) -> Result<ModelParts> {
    check_p(p)?;
    Ok((
        Arc::new(SquaredError::new(p)),
        RegularizerSpec::new(vec![
            Arc::new(L1Norm { start: 0 }),
            Arc::new(HalfSquaredNorm { start: 0 }),
        ]),
    ))
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidInput("feature dimension p must be ≥ 1".into()));
    }
    Ok(())
}

/// Named model families, as selected from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Ridge,
    RidgeDiagonal,
    Logistic,
    ElasticNet,
}

impl ModelFamily {
    pub fn build(self, p: usize, with_intercept: bool) -> Result<ModelParts> {
        match self {
            ModelFamily::Ridge => ridge(p),
            ModelFamily::RidgeDiagonal => ridge_diagonal(p),
            ModelFamily::Logistic => logistic(p, with_intercept),
            ModelFamily::ElasticNet => elastic_net(p),
        }
    }

    /// Number of regularizers the family exposes for feature dimension `p`.
    pub fn num_lambdas(self, p: usize) -> usize {
        match self {
            ModelFamily::Ridge | ModelFamily::Logistic => 1,
            ModelFamily::RidgeDiagonal => p,
            ModelFamily::ElasticNet => 2,
        }
    }

    pub fn is_classification(self) -> bool {
        self == ModelFamily::Logistic
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn ridge_at_zero() {
        let (loss, _) = ridge_diagonal(3).unwrap();
        let s = Sample::from_slice(&[1.0, -2.0, 0.5], 3.0);
        let theta = DVector::zeros(3);
        assert_eq!(loss.loss(&s, &theta), 4.5);
        assert_eq!(loss.grad(&s, &theta), dv(&[-3.0, 6.0, -1.5]));
    }

    #[test]
    fn ridge_perfect_fit() {
        let (loss, _) = ridge_diagonal(2).unwrap();
        let s = Sample::from_slice(&[1.0, 0.0], 1.0);
        let theta = dv(&[1.0, 0.0]);
        assert_eq!(loss.loss(&s, &theta), 0.0);
        assert_eq!(loss.grad(&s, &theta), dv(&[0.0, 0.0]));
        let h = loss.hess(&s, &theta);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn logistic_at_origin_is_log_two() {
        let (loss, _) = logistic(2, true).unwrap();
        let theta = DVector::zeros(3);
        for y in [0.0, 1.0] {
            let s = Sample::from_slice(&[0.3, -1.2], y);
            assert!((loss.loss(&s, &theta) - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_loss_decreases_to_zero_along_margin() {
        let (loss, _) = logistic(1, true).unwrap();
        let s = Sample::from_slice(&[1.0], 1.0);
        let mut prev = f64::INFINITY;
        for t in [0.0, 1.0, 5.0, 20.0, 100.0, 500.0] {
            let l = loss.loss(&s, &dv(&[0.0, t]));
            assert!(l < prev);
            assert!(l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-200);
    }

    #[test]
    fn logistic_finite_at_extreme_margins() {
        let (loss, _) = logistic(1, false).unwrap();
        for (y, t) in [(0.0, 500.0), (1.0, -500.0), (0.0, -500.0), (1.0, 500.0)] {
            let s = Sample::from_slice(&[1.0], y);
            let theta = dv(&[t]);
            assert!(loss.loss(&s, &theta).is_finite());
            assert!(loss.grad(&s, &theta).iter().all(|v| v.is_finite()));
        }
        assert!((loss.loss(&Sample::from_slice(&[1.0], 0.0), &dv(&[500.0])) - 500.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_rejects_non_binary_labels() {
        let (loss, _) = logistic(1, false).unwrap();
        assert!(loss.check_response(0.5).is_err());
        assert!(loss.check_response(1.0).is_ok());
    }

    #[test]
    fn intercept_is_unpenalized() {
        let (_, regs) = logistic(2, true).unwrap();
        let theta = dv(&[5.0, 1.0, 2.0]);
        let r = regs.get(0);
        assert_eq!(r.value(&theta), 2.5);
        assert_eq!(r.grad(&theta), dv(&[0.0, 1.0, 2.0]));
        assert_eq!(r.hess(&theta)[(0, 0)], 0.0);
    }

    #[test]
    fn l1_has_zero_hessian_and_sign_gradient() {
        let (_, regs) = elastic_net(3).unwrap();
        let theta = dv(&[-2.0, 0.0, 0.5]);
        let l1 = regs.get(0);
        assert_eq!(l1.smoothness(), Smoothness::L1);
        assert_eq!(l1.value(&theta), 2.5);
        assert_eq!(l1.grad(&theta), dv(&[-1.0, 0.0, 1.0]));
        assert_eq!(l1.hess(&theta), DMatrix::zeros(3, 3));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(ridge_diagonal(0).is_err());
        assert!(elastic_net(0).is_err());
    }
}
