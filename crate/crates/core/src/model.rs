//! Measurement model, noise-covariance decomposition and Fisher information.
//!
//! A linear Gaussian model `y = H x + v` with prior `x ~ N(mu, Sigma)` and
//! correlated noise `v ~ N(0, R)`. Activating a subset of sensors keeps the
//! corresponding rows of `H` and the corresponding rows *and columns* of `R`;
//! the Bayesian Fisher information of the active subset is
//! `J_w = Sigma^-1 + H_w^T R_w^-1 H_w`, and the MMSE error covariance is its
//! inverse. The module provides the truncated form, a closed form that is an
//! explicit function of the selection vector, and the uncorrelated special
//! case.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Linear Gaussian measurement model for `m` sensors observing an
/// `n`-dimensional parameter.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    obs_matrix: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    prior_prec: DMatrix<f64>,
    noise_prec: DMatrix<f64>,
}

fn check_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    let skew = (a - a.transpose()).norm();
    if skew > 1e-9 * a.norm().max(1.0) {
        return Err(Error::InvalidInput(format!("{what} is not symmetric")));
    }
    Ok(())
}

impl MeasurementModel {
    /// Builds and validates a model. The prior and noise covariances must be
    /// symmetric positive definite; `obs_matrix` is `m x n`.
    pub fn new(
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
        obs_matrix: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = prior_mean.len();
        let m = obs_matrix.nrows();
        if prior_cov.nrows() != n || prior_cov.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "prior covariance {}x{}, expected {n}x{n}",
                prior_cov.nrows(),
                prior_cov.ncols()
            )));
        }
        if obs_matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "observation matrix has {} columns, expected {n}",
                obs_matrix.ncols()
            )));
        }
        if noise_cov.nrows() != m || noise_cov.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "noise covariance {}x{}, expected {m}x{m}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        check_symmetric(&prior_cov, "prior covariance")?;
        check_symmetric(&noise_cov, "noise covariance")?;
        let prior_prec = linalg::spd_inverse_eig(&prior_cov, "prior covariance")?;
        let noise_prec = linalg::spd_inverse_eig(&noise_cov, "noise covariance")?;
        Ok(Self {
            prior_mean,
            prior_cov,
            obs_matrix,
            noise_cov,
            prior_prec,
            noise_prec,
        })
    }

    pub fn sensor_count(&self) -> usize {
        self.obs_matrix.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn obs_matrix(&self) -> &DMatrix<f64> {
        &self.obs_matrix
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    /// Cached inverse of the prior covariance.
    pub fn prior_precision(&self) -> &DMatrix<f64> {
        &self.prior_prec
    }

    /// Cached inverse of the full noise covariance.
    pub fn noise_precision(&self) -> &DMatrix<f64> {
        &self.noise_prec
    }

    /// Row `i` of the observation matrix as a column vector.
    pub fn obs_row(&self, i: usize) -> DVector<f64> {
        self.obs_matrix.row(i).transpose()
    }
}

/// Boolean sensor-activation pattern, optionally carrying a budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionVector {
    bits: Vec<bool>,
    budget: Option<usize>,
}

impl SelectionVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits, budget: None }
    }

    /// Budget-constrained selection; fails if more than `s` sensors are set.
    pub fn with_budget(bits: Vec<bool>, s: usize) -> Result<Self> {
        let active = bits.iter().filter(|&&b| b).count();
        if active > s {
            return Err(Error::Budget(format!("{active} active sensors > budget {s}")));
        }
        Ok(Self {
            bits,
            budget: Some(s),
        })
    }

    pub fn all_off(m: usize) -> Self {
        Self::new(vec![false; m])
    }

    pub fn all_on(m: usize) -> Self {
        Self::new(vec![true; m])
    }

    pub fn from_indices(m: usize, idx: &[usize]) -> Result<Self> {
        let mut bits = vec![false; m];
        for &i in idx {
            if i >= m {
                return Err(Error::InvalidInput(format!("sensor index {i} >= {m}")));
            }
            bits[i] = true;
        }
        Ok(Self::new(bits))
    }

    /// Selection with bit `i` set iff bit `i` of `mask` is set.
    pub fn from_mask(m: usize, mask: u64) -> Self {
        Self::new((0..m).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_active(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    /// Marks sensor `i` active, enforcing the budget when present.
    pub fn activate(&mut self, i: usize) -> Result<()> {
        if i >= self.bits.len() {
            return Err(Error::InvalidInput(format!("sensor index {i} out of range")));
        }
        if !self.bits[i] {
            if let Some(s) = self.budget {
                if self.count_active() + 1 > s {
                    return Err(Error::Budget(format!("budget {s} exhausted")));
                }
            }
            self.bits[i] = true;
        }
        Ok(())
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| !self.bits[i]).collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// 0/1 vector form.
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.bits.len(),
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        )
    }
}

/// Split of the noise covariance `R = a I + S` with `a > 0` and `S` positive
/// definite, which makes the Fisher information an explicit function of the
/// selection vector.
#[derive(Clone, Debug)]
pub struct CovDecomposition {
    shift: f64,
    s_matrix: DMatrix<f64>,
    s_inv: DMatrix<f64>,
}

impl CovDecomposition {
    fn build(noise_cov: &DMatrix<f64>, shift: f64) -> Result<Self> {
        let m = noise_cov.nrows();
        let s_matrix = noise_cov - DMatrix::<f64>::identity(m, m) * shift;
        let s_inv = linalg::spd_inverse_eig(&s_matrix, "covariance split S")?;
        Ok(Self {
            shift,
            s_matrix,
            s_inv,
        })
    }

    /// Custom split `R = a I + S`; fails unless `0 < a` and `S = R - a I` is
    /// positive definite.
    pub fn with_shift(noise_cov: &DMatrix<f64>, shift: f64) -> Result<Self> {
        if shift <= 0.0 {
            return Err(Error::InvalidInput(format!("shift a = {shift} must be > 0")));
        }
        Self::build(noise_cov, shift)
    }

    /// Scalar `a` of the split.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn s_matrix(&self) -> &DMatrix<f64> {
        &self.s_matrix
    }

    pub fn s_inverse(&self) -> &DMatrix<f64> {
        &self.s_inv
    }

    /// `a I + S`, which must reproduce the original noise covariance.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let m = self.s_matrix.nrows();
        &self.s_matrix + DMatrix::<f64>::identity(m, m) * self.shift
    }
}

/// Default split `a = lambda_min(R) / 2`, keeping both `S` and the inner
/// matrix of the closed form well conditioned.
pub fn decompose_covariance(noise_cov: &DMatrix<f64>) -> Result<CovDecomposition> {
    let lo = linalg::min_eigenvalue(noise_cov);
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "noise covariance min eigenvalue {lo:.3e}"
        )));
    }
    CovDecomposition::build(noise_cov, lo / 2.0)
}

/// Symmetric Fisher information matrix of a selection.
#[derive(Clone, Debug)]
pub struct FisherMatrix {
    matrix: DMatrix<f64>,
}

impl FisherMatrix {
    /// Wraps a computed information matrix, symmetrizing to suppress
    /// floating-point drift.
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self {
            matrix: linalg::symmetrize(&matrix),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// MMSE objective `tr(J^-1)`.
    pub fn trace_inverse(&self) -> Result<f64> {
        linalg::trace_inverse_spd(&self.matrix, "Fisher matrix")
    }

    /// MMSE error covariance `J^-1`.
    pub fn error_covariance(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse_chol(&self.matrix, "Fisher matrix")
    }
}

/// MMSE objective `tr(J^-1)` of a Fisher matrix.
pub fn objective_trace_inverse(fisher: &FisherMatrix) -> Result<f64> {
    fisher.trace_inverse()
}

/// Planar sensor layout with an exponential spatial-correlation model.
#[derive(Clone, Debug)]
pub struct SensorGeometry {
    positions: Vec<[f64; 2]>,
    noise_var: f64,
    corr_param: f64,
}

impl SensorGeometry {
    pub fn new(positions: Vec<[f64; 2]>, noise_var: f64, corr_param: f64) -> Result<Self> {
        if positions.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidGeometry("non-finite sensor position".into()));
        }
        if !(corr_param > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "correlation parameter {corr_param} must be > 0"
            )));
        }
        if !(noise_var >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "noise variance {noise_var} must be >= 0"
            )));
        }
        Ok(Self {
            positions,
            noise_var,
            corr_param,
        })
    }

    /// Sensors placed uniformly at random over `[0, region]^2`.
    pub fn random_uniform<R: Rng + ?Sized>(
        m: usize,
        region: f64,
        noise_var: f64,
        corr_param: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let positions = (0..m)
            .map(|_| [rng.random::<f64>() * region, rng.random::<f64>() * region])
            .collect();
        Self::new(positions, noise_var, corr_param)
    }

    /// Sensors snapped to distinct integer lattice points of
    /// `{0, ..., region} x {0, ..., region}`.
    pub fn random_grid<R: Rng + ?Sized>(
        m: usize,
        region: usize,
        noise_var: f64,
        corr_param: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let cells = (region + 1) * (region + 1);
        if m > cells {
            return Err(Error::InvalidGeometry(format!(
                "{m} sensors cannot occupy {cells} lattice points"
            )));
        }
        let mut used = std::collections::HashSet::new();
        let mut positions = Vec::with_capacity(m);
        while positions.len() < m {
            let x = rng.random_range(0..=region);
            let y = rng.random_range(0..=region);
            if used.insert((x, y)) {
                positions.push([x as f64, y as f64]);
            }
        }
        Self::new(positions, noise_var, corr_param)
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn sensor_count(&self) -> usize {
        self.positions.len()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn corr_param(&self) -> f64 {
        self.corr_param
    }
}

/// Exponential spatial covariance
/// `R_ij = sigma_v^2 * exp(-rho * |beta_i - beta_j|)`.
///
/// Smaller `rho` means stronger correlation across the network.
pub fn exp_covariance(geom: &SensorGeometry) -> DMatrix<f64> {
    let m = geom.sensor_count();
    let mut r = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let dx = geom.positions[i][0] - geom.positions[j][0];
            let dy = geom.positions[i][1] - geom.positions[j][1];
            let dist = (dx * dx + dy * dy).sqrt();
            let v = geom.noise_var * (-geom.corr_param * dist).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Fisher information through explicit truncation: keep the selected rows of
/// `H` and the selected rows and columns of `R`, then invert the block.
///
/// This is the reference (exact) form; `R` must be truncated *before*
/// inversion.
pub fn fisher_truncated(model: &MeasurementModel, w: &SelectionVector) -> Result<FisherMatrix> {
    if w.len() != model.sensor_count() {
        return Err(Error::DimensionMismatch(format!(
            "selection length {} vs {} sensors",
            w.len(),
            model.sensor_count()
        )));
    }
    let active = w.active_indices();
    if active.is_empty() {
        return Ok(FisherMatrix::new(model.prior_prec.clone()));
    }
    let h_w = linalg::select_rows(&model.obs_matrix, &active);
    let r_w = linalg::principal_submatrix(&model.noise_cov, &active);
    let r_w_inv = linalg::spd_inverse_eig(&r_w, "truncated noise covariance")?;
    let info = &model.prior_prec + h_w.transpose() * r_w_inv * h_w;
    Ok(FisherMatrix::new(info))
}

/// Fisher information in closed form with respect to the selection vector:
/// `J = Sigma^-1 + H^T S^-1 H - H^T S^-1 (S^-1 + a^-1 diag(w))^-1 S^-1 H`.
///
/// Agrees with [`fisher_truncated`] for every Boolean selection, for any
/// valid split of `R`.
pub fn fisher_closed_form(
    model: &MeasurementModel,
    decomp: &CovDecomposition,
    w: &SelectionVector,
) -> Result<FisherMatrix> {
    if w.len() != model.sensor_count() {
        return Err(Error::DimensionMismatch(format!(
            "selection length {} vs {} sensors",
            w.len(),
            model.sensor_count()
        )));
    }
    let recon = decomp.reconstruct();
    if linalg::rel_frobenius(&recon, &model.noise_cov) > 1e-12 {
        return Err(Error::Precondition(
            "covariance split does not reconstruct the model noise covariance".into(),
        ));
    }
    let s_inv = decomp.s_inverse();
    let mut inner = s_inv.clone();
    for (i, &b) in w.bits().iter().enumerate() {
        if b {
            inner[(i, i)] += 1.0 / decomp.shift;
        }
    }
    let inner_inv = linalg::spd_inverse_chol(&inner, "closed-form inner matrix")?;
    let b = s_inv * &model.obs_matrix; // S^-1 H
    let info = &model.prior_prec + model.obs_matrix.transpose() * s_inv * &model.obs_matrix
        - b.transpose() * inner_inv * &b;
    Ok(FisherMatrix::new(info))
}

/// Additive Fisher information for uncorrelated (diagonal) noise:
/// `J = Sigma^-1 + sum_i w_i h_i h_i^T / R_ii`.
pub fn fisher_uncorrelated(model: &MeasurementModel, w: &SelectionVector) -> Result<FisherMatrix> {
    if w.len() != model.sensor_count() {
        return Err(Error::DimensionMismatch(format!(
            "selection length {} vs {} sensors",
            w.len(),
            model.sensor_count()
        )));
    }
    let r = &model.noise_cov;
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            if i != j && r[(i, j)].abs() > 1e-14 {
                return Err(Error::Precondition(format!(
                    "noise covariance has off-diagonal entry {:.3e} at ({i}, {j})",
                    r[(i, j)]
                )));
            }
        }
    }
    let mut info = model.prior_prec.clone();
    for i in 0..w.len() {
        if w.is_active(i) {
            let h_i = model.obs_row(i);
            info += &h_i * h_i.transpose() / r[(i, i)];
        }
    }
    Ok(FisherMatrix::new(info))
}

/// Empirical mean squared error of the MMSE estimator under selection `w`,
/// averaged over `trials` draws of parameter and correlated noise.
///
/// Deterministic for a fixed seed; trial `t` draws from RNG stream `t`.
pub fn empirical_mse(
    model: &MeasurementModel,
    w: &SelectionVector,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let active = w.active_indices();
    let prior = linalg::MvnSampler::new(model.prior_mean.clone(), &model.prior_cov, 1e-9)?;
    let noise = linalg::MvnSampler::new(
        DVector::zeros(model.sensor_count()),
        &model.noise_cov,
        1e-9,
    )?;
    // Posterior-mean gain for the active block: K = J^-1 H_w^T R_w^-1.
    let gain = if active.is_empty() {
        None
    } else {
        let h_w = linalg::select_rows(&model.obs_matrix, &active);
        let r_w = linalg::principal_submatrix(&model.noise_cov, &active);
        let r_w_inv = linalg::spd_inverse_eig(&r_w, "truncated noise covariance")?;
        let p = fisher_truncated(model, w)?.error_covariance()?;
        Some((p * h_w.transpose() * r_w_inv, h_w))
    };
    let mut total = 0.0;
    for t in 0..trials {
        let mut rng = crate::rng::stream(seed, t as u64);
        let x = prior.sample(&mut rng);
        let v = noise.sample(&mut rng);
        let estimate = match &gain {
            None => model.prior_mean.clone(),
            Some((k, h_w)) => {
                let y_w = h_w * &x
                    + DVector::from_iterator(active.len(), active.iter().map(|&i| v[i]));
                &model.prior_mean + k * (y_w - h_w * &model.prior_mean)
            }
        };
        total += (estimate - x).norm_squared();
    }
    Ok(total / trials as f64)
}
