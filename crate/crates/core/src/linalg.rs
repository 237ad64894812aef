//! Dense symmetric positive definite solves and the rank-one downdate used for
//! leave-one-out Hessians.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Smallest Sherman–Morrison denominator accepted as positive definite.
const DOWNDATE_PIVOT_FLOOR: f64 = 1e-12;

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn new(matrix: DMatrix<f64>) -> Option<Self> {
        if matrix.nrows() == 0 {
            return None;
        }
        let chol = Cholesky::new(matrix)?;
        if chol.l_dirty().diagonal().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return None;
        }
        Some(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Solves `(A − c·v·vᵀ) x = b` from the factor of `A` by Sherman–Morrison.
    ///
    /// Returns `None` when the downdated matrix is singular or indefinite, i.e.
    /// when `1 − c·vᵀA⁻¹v` is not safely positive.
    pub fn downdate_solve(&self, c: f64, v: &DVector<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
        let a_inv_b = self.solve(b);
        if c == 0.0 {
            return Some(a_inv_b);
        }
        let a_inv_v = self.solve(v);
        let denom = 1.0 - c * v.dot(&a_inv_v);
        if denom.is_nan() || denom <= DOWNDATE_PIVOT_FLOOR {
            return None;
        }
        let coeff = c * v.dot(&a_inv_b) / denom;
        Some(a_inv_b + a_inv_v * coeff)
    }
}

/// Principal submatrix on `idx`.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Rows of a matrix on `idx`.
pub fn subrows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| v[idx[r]])
}

/// Writes `sub` back into a length-`k` vector at positions `idx`; other entries are zero.
pub fn scatter(sub: &DVector<f64>, idx: &[usize], k: usize) -> DVector<f64> {
    let mut out = DVector::zeros(k);
    for (r, &j) in idx.iter().enumerate() {
        out[j] = sub[r];
    }
    out
}
