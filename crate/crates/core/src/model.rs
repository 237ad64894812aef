//! Losses, regularizers and the regularized objective.
//!
//! The objective over a sample set `S` is the total
//! `Σ_{j∈S} ℓ(z_j; θ) + λᵀ r(θ)`. The per-sample form used by the empirical
//! Hessian divides that total by `|S|`; both describe the same minimizer.
//!
//! Sample subsets are always expressed as "all samples except `exclude`", which
//! is how leave-one-out and leave-q-out views are produced without copying data.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: DVector<f64>,
    pub response: f64,
}

impl Sample {
    pub fn new(features: DVector<f64>, response: f64) -> Self {
        Self { features, response }
    }

    pub fn from_slice(features: &[f64], response: f64) -> Self {
        Self::new(DVector::from_column_slice(features), response)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    fn is_finite(&self) -> bool {
        self.response.is_finite() && self.features.iter().all(|v| v.is_finite())
    }
}

/// An immutable set of `n ≥ 2` samples sharing feature dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    p: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a dataset needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let p = samples[0].dim();
        for (i, s) in samples.iter().enumerate() {
            if s.dim() != p {
                return Err(Error::DimensionMismatch {
                    what: "sample features",
                    expected: p,
                    found: s.dim(),
                });
            }
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("sample {i}")));
            }
        }
        Ok(Self { samples, p })
    }

    /// Builds a dataset from an `n × p` feature matrix and `n` responses.
    pub fn from_matrix(features: &DMatrix<f64>, responses: &DVector<f64>) -> Result<Self> {
        if features.nrows() != responses.len() {
            return Err(Error::DimensionMismatch {
                what: "responses",
                expected: features.nrows(),
                found: responses.len(),
            });
        }
        let samples = (0..features.nrows())
            .map(|i| Sample::new(features.row(i).transpose(), responses[i]))
            .collect();
        Self::new(samples)
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    /// Iterates over `(index, sample)` for every sample not listed in `exclude`.
    pub fn retained<'a>(
        &'a self,
        exclude: &'a [usize],
    ) -> impl Iterator<Item = (usize, &'a Sample)> + 'a {
        self.samples
            .iter()
            .enumerate()
            .filter(move |(j, _)| !exclude.contains(j))
    }

    pub(crate) fn check_exclusion(&self, exclude: &[usize]) -> Result<()> {
        for (pos, &i) in exclude.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::InvalidInput(format!(
                    "leave-out index {i} out of range for n = {}",
                    self.n()
                )));
            }
            if exclude[..pos].contains(&i) {
                return Err(Error::InvalidInput(format!("leave-out index {i} repeated")));
            }
        }
        if exclude.len() >= self.n() {
            return Err(Error::InvalidInput(format!(
                "leaving out {} of {} samples leaves none",
                exclude.len(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// Model parameters `θ ∈ R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(DVector<f64>);

impl ParameterVector {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self(theta))
    }

    pub fn zeros(k: usize) -> Self {
        Self(DVector::zeros(k))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for ParameterVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Regularization weights, one per regularizer. Entries are finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaVector(Vec<f64>);

impl LambdaVector {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        for (m, &l) in lambdas.iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::InvalidInput(format!("lambda[{m}] is not finite")));
            }
            if l < 0.0 {
                return Err(Error::InvalidInput(format!("lambda[{m}] = {l} is negative")));
            }
        }
        Ok(Self(lambdas))
    }

    pub fn uniform(value: f64, m: usize) -> Result<Self> {
        Self::new(vec![value; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

/// Per-sample loss `ℓ(z; θ)` with analytic first and second derivatives.
pub trait LossModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Feature dimension `p` expected of every sample.
    fn num_features(&self) -> usize;

    /// Parameter dimension `k`.
    fn num_params(&self) -> usize;

    fn loss(&self, sample: &Sample, theta: &DVector<f64>) -> f64;

    fn grad(&self, sample: &Sample, theta: &DVector<f64>) -> DVector<f64>;

    fn hess(&self, sample: &Sample, theta: &DVector<f64>) -> DMatrix<f64>;

    /// `Some((c, v))` when the sample Hessian equals `c·v·vᵀ`. Enables
    /// rank-one downdates of the assembled Hessian.
    fn hess_rank_one(&self, _sample: &Sample, _theta: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        None
    }

    /// True when `hess` does not depend on `θ`.
    fn has_constant_hessian(&self) -> bool {
        false
    }

    /// Accepts or rejects a sample's response (e.g. binary labels).
    fn check_response(&self, _response: f64) -> Result<()> {
        Ok(())
    }

    /// `out += scale · ∇²ℓ(z; θ)`.
    fn add_hess_to(&self, sample: &Sample, theta: &DVector<f64>, scale: f64, out: &mut DMatrix<f64>) {
        match self.hess_rank_one(sample, theta) {
            Some((c, v)) => out.ger(scale * c, &v, &v, 1.0),
            None => *out += self.hess(sample, theta) * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    L1,
}

/// One regularizer `r_m(θ)`.
pub trait Regularizer: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn value(&self, theta: &DVector<f64>) -> f64;

    /// Gradient; for l1 terms the subgradient `sign(θ)` with `sign(0) = 0`.
    fn grad(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Hessian; l1 terms return the zero matrix.
    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    fn smoothness(&self) -> Smoothness;

    /// For l1 terms: per-coordinate 0/1 indicator of penalized coordinates.
    fn l1_mask(&self, _k: usize) -> Option<DVector<f64>> {
        None
    }

    fn has_constant_hessian(&self) -> bool {
        false
    }
}

/// The ordered regularizer vector `r(θ) = (r_1(θ), …, r_M(θ))`.
#[derive(Debug, Clone, Default)]
pub struct RegularizerSpec(Vec<Arc<dyn Regularizer>>);

impl RegularizerSpec {
    pub fn new(regularizers: Vec<Arc<dyn Regularizer>>) -> Self {
        Self(regularizers)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn Regularizer>> {
        self.0.iter()
    }

    pub fn get(&self, m: usize) -> &dyn Regularizer {
        self.0[m].as_ref()
    }
}

/// Loss, regularizers and the weights they are combined with.
#[derive(Debug, Clone)]
pub struct RegularizedObjective {
    loss: Arc<dyn LossModel>,
    regularizers: RegularizerSpec,
    lambda: LambdaVector,
}

impl RegularizedObjective {
    pub fn new(
        loss: Arc<dyn LossModel>,
        regularizers: RegularizerSpec,
        lambda: LambdaVector,
    ) -> Result<Self> {
        if regularizers.len() != lambda.len() {
            return Err(Error::DimensionMismatch {
                what: "lambda vector",
                expected: regularizers.len(),
                found: lambda.len(),
            });
        }
        Ok(Self {
            loss,
            regularizers,
            lambda,
        })
    }

    pub fn with_lambda(&self, lambda: LambdaVector) -> Result<Self> {
        Self::new(self.loss.clone(), self.regularizers.clone(), lambda)
    }

    pub fn loss(&self) -> &dyn LossModel {
        self.loss.as_ref()
    }

    pub fn regularizers(&self) -> &RegularizerSpec {
        &self.regularizers
    }

    pub fn lambda(&self) -> &LambdaVector {
        &self.lambda
    }

    pub fn num_params(&self) -> usize {
        self.loss.num_params()
    }

    /// Checks that the dataset fits this objective's loss.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if dataset.p() != self.loss.num_features() {
            return Err(Error::DimensionMismatch {
                what: "dataset features",
                expected: self.loss.num_features(),
                found: dataset.p(),
            });
        }
        for s in dataset.samples() {
            self.loss.check_response(s.response)?;
        }
        Ok(())
    }

    pub(crate) fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.num_params(),
                found: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(())
    }

    /// True when every loss and smooth regularizer Hessian is independent of `θ`.
    pub fn has_constant_hessian(&self) -> bool {
        self.loss.has_constant_hessian()
            && self
                .regularizers
                .iter()
                .all(|r| r.smoothness() == Smoothness::L1 || r.has_constant_hessian())
    }

    fn weighted_regs(&self) -> impl Iterator<Item = (f64, &dyn Regularizer)> {
        self.lambda
            .as_slice()
            .iter()
            .copied()
            .zip(self.regularizers.iter().map(|r| r.as_ref()))
    }

    /// Sum of the sample losses over retained samples.
    pub fn loss_sum(&self, dataset: &Dataset, theta: &DVector<f64>, exclude: &[usize]) -> f64 {
        dataset
            .retained(exclude)
            .map(|(_, s)| self.loss.loss(s, theta))
            .sum()
    }

    /// `λᵀ r(θ)`, l1 terms included.
    pub fn penalty(&self, theta: &DVector<f64>) -> f64 {
        self.weighted_regs()
            .filter(|(l, _)| *l != 0.0)
            .map(|(l, r)| l * r.value(theta))
            .sum()
    }

    /// `Σ_{j∈S} ℓ(z_j; θ) + λᵀ r(θ)`.
    pub fn total(&self, dataset: &Dataset, theta: &DVector<f64>, exclude: &[usize]) -> f64 {
        self.loss_sum(dataset, theta, exclude) + self.penalty(theta)
    }

    /// Total objective without the l1 terms.
    pub fn smooth_total(&self, dataset: &Dataset, theta: &DVector<f64>, exclude: &[usize]) -> f64 {
        self.loss_sum(dataset, theta, exclude)
            + self
                .weighted_regs()
                .filter(|(l, r)| *l != 0.0 && r.smoothness() == Smoothness::Smooth)
                .map(|(l, r)| l * r.value(theta))
                .sum::<f64>()
    }

    /// Gradient of [`Self::smooth_total`].
    pub fn smooth_gradient(
        &self,
        dataset: &Dataset,
        theta: &DVector<f64>,
        exclude: &[usize],
    ) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        for (_, s) in dataset.retained(exclude) {
            g += self.loss.grad(s, theta);
        }
        for (l, r) in self.weighted_regs() {
            if l != 0.0 && r.smoothness() == Smoothness::Smooth {
                g.axpy(l, &r.grad(theta), 1.0);
            }
        }
        g
    }

    /// `Σ_m λ_m ∇²r_m(θ)` over smooth regularizers.
    pub fn penalty_hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let k = theta.len();
        let mut h = DMatrix::zeros(k, k);
        for (l, r) in self.weighted_regs() {
            if l != 0.0 && r.smoothness() == Smoothness::Smooth {
                h += r.hess(theta) * l;
            }
        }
        h
    }

    /// Unnormalized Hessian `Σ_{j∈S} ∇²ℓ(z_j; θ) + Σ_m λ_m ∇²r_m(θ)`.
    pub fn total_hessian(
        &self,
        dataset: &Dataset,
        theta: &DVector<f64>,
        exclude: &[usize],
    ) -> Result<DMatrix<f64>> {
        let mut h = self.penalty_hessian(theta);
        for (j, s) in dataset.retained(exclude) {
            self.loss.add_hess_to(s, theta, 1.0, &mut h);
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("Hessian of sample {j}")));
            }
        }
        symmetrize(&mut h);
        Ok(h)
    }

    /// The `k × M` matrix whose columns are `∇r_m(θ)`.
    pub fn regularizer_jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(theta.len(), self.regularizers.len());
        for (m, r) in self.regularizers.iter().enumerate() {
            jac.set_column(m, &r.grad(theta));
        }
        jac
    }

    /// Per-coordinate l1 weights `Σ_m λ_m · mask_m`, or `None` when no l1 term is active.
    pub fn l1_weights(&self) -> Option<DVector<f64>> {
        let k = self.num_params();
        let mut w = DVector::zeros(k);
        let mut any = false;
        for (l, r) in self.weighted_regs() {
            if r.smoothness() == Smoothness::L1 && l > 0.0 {
                if let Some(mask) = r.l1_mask(k) {
                    w.axpy(l, &mask, 1.0);
                    any = true;
                }
            }
        }
        any.then_some(w)
    }

    pub fn has_l1(&self) -> bool {
        self.l1_weights().is_some()
    }
}

/// Mirrors the lower triangle into the upper one so `H == Hᵀ` exactly.
pub(crate) fn symmetrize(h: &mut DMatrix<f64>) {
    let k = h.nrows();
    for c in 0..k {
        for r in (c + 1)..k {
            h[(c, r)] = h[(r, c)];
        }
    }
}

/// Empirical Hessian of the regularized loss over all samples, or over all but
/// `exclude`.
///
/// Returns `(1/m)[Σ_{j∈S} ∇²ℓ(z_j; θ) + Σ_m λ_m ∇²r_m(θ)]` with `m = |S|`. The
/// regularizer term keeps its full `λ` weight in the excluded case.
pub fn empirical_hessian(
    dataset: &Dataset,
    exclude: Option<usize>,
    theta: &DVector<f64>,
    objective: &RegularizedObjective,
) -> Result<DMatrix<f64>> {
    objective.validate(dataset)?;
    objective.check_theta(theta)?;
    let exclude: Vec<usize> = exclude.into_iter().collect();
    dataset.check_exclusion(&exclude)?;
    let m = (dataset.n() - exclude.len()) as f64;
    Ok(objective.total_hessian(dataset, theta, &exclude)? / m)
}
