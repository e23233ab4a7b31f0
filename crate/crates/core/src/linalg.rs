//! Dense symmetric linear algebra helpers used across the crate.
//!
//! Matrices are dense `nalgebra` types; problem sizes stay in the hundreds,
//! so there is no sparse path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Condition-number limit beyond which a matrix is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

/// Returns `(a + a^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues and eigenvectors of a symmetric matrix.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = symmetrize(a).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(a);
    vals.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    let (vals, _) = sym_eigen(a);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Inverse of a symmetric positive-definite matrix through its eigensystem,
/// rejecting indefinite or ill-conditioned input.
pub fn spd_inverse_eig(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(a);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "{what}: min eigenvalue {lo:.3e}"
        )));
    }
    if hi / lo > COND_LIMIT {
        return Err(Error::IllConditioned(format!(
            "{what}: condition number {:.3e}",
            hi / lo
        )));
    }
    let inv_vals = DVector::from_iterator(vals.len(), vals.iter().map(|v| 1.0 / v));
    let scaled = &vecs * DMatrix::from_diagonal(&inv_vals);
    Ok(symmetrize(&(scaled * vecs.transpose())))
}

/// Cholesky-based SPD inverse for hot paths; errors when factorization fails.
pub fn spd_inverse_chol(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    symmetrize(a)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::IllConditioned(format!("{what}: Cholesky failed")))
}

/// Trace of the inverse of an SPD matrix.
pub fn trace_inverse_spd(a: &DMatrix<f64>, what: &str) -> Result<f64> {
    Ok(spd_inverse_chol(a, what)?.trace())
}

/// Rows and columns of `a` restricted to `idx` (in order).
pub fn principal_submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

/// Rows of `a` restricted to `idx` (in order).
pub fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |r, c| a[(idx[r], c)])
}

/// Relative Frobenius distance `|a - b|_F / max(1, |b|_F)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Standard normal vector of the given length.
pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Sampler for a (possibly rank-deficient) Gaussian with dense covariance.
///
/// The covariance is eigen-decomposed once; eigenvalues below zero are
/// clipped, which tolerates PSD matrices that are indefinite only at solver
/// tolerance. Construction fails if the covariance is meaningfully indefinite.
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if mean.len() != cov.nrows() || cov.nrows() != cov.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "mvn sampler: mean {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let (vals, vecs) = sym_eigen(cov);
        let hi = vals.iter().cloned().fold(0.0_f64, f64::max);
        let floor = -tol * hi.max(1.0);
        if let Some(bad) = vals.iter().find(|&&v| v < floor) {
            return Err(Error::NotPositiveDefinite(format!(
                "mvn covariance eigenvalue {bad:.3e} below tolerance {floor:.3e}"
            )));
        }
        let sqrt_vals =
            DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
        let factor = vecs * DMatrix::from_diagonal(&sqrt_vals);
        Ok(Self { mean, factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(self.factor.ncols(), rng);
        &self.mean + &self.factor * z
    }
}

/// Sum of binomial coefficients C(m, 0) + ... + C(m, s), saturating.
pub fn binomial_sum(m: usize, s: usize) -> f64 {
    let mut total = 0.0_f64;
    let mut coeff = 1.0_f64;
    for k in 0..=s.min(m) {
        if k > 0 {
            coeff *= (m - k + 1) as f64 / k as f64;
        }
        total += coeff;
        if !total.is_finite() {
            return f64::INFINITY;
        }
    }
    total
}
