//! Weak-correlation approximation of the Fisher information and the
//! trace-of-information selection problem.
//!
//! The approximate information `Jhat = Sigma^-1 + H^T (w w^T o R^-1) H`
//! treats the noise covariance as independent of the selection. It deviates
//! from the exact information at second order in the off-diagonal noise
//! strength, so it is trustworthy only in the weak-correlation regime.
//! Maximizing `tr(Jhat)` reduces to maximizing the convex quadratic
//! `w^T Omega w` over the cardinality box, whose optima sit at Boolean
//! vertices; a multi-start bilinear (alternating linear) method finds good
//! vertices without an LP solver, since linear maximization over the box with
//! a cardinality cap has a closed-form top-s solution.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{fisher_truncated, FisherMatrix, MeasurementModel, SelectionVector};

/// Split `R = Lambda + eps * Upsilon` into its diagonal and a normalized
/// hollow off-diagonal part, with `eps` the largest off-diagonal magnitude.
#[derive(Clone, Debug)]
pub struct WeakDecomposition {
    lambda: DVector<f64>,
    upsilon: DMatrix<f64>,
    epsilon: f64,
}

impl WeakDecomposition {
    pub fn from_noise_cov(noise_cov: &DMatrix<f64>) -> Result<Self> {
        if noise_cov.nrows() != noise_cov.ncols() {
            return Err(Error::DimensionMismatch("noise covariance not square".into()));
        }
        let m = noise_cov.nrows();
        let lambda = noise_cov.diagonal();
        let mut epsilon = 0.0_f64;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    epsilon = epsilon.max(noise_cov[(i, j)].abs());
                }
            }
        }
        let upsilon = if epsilon == 0.0 {
            DMatrix::zeros(m, m)
        } else {
            DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    0.0
                } else {
                    noise_cov[(i, j)] / epsilon
                }
            })
        };
        Ok(Self {
            lambda,
            upsilon,
            epsilon,
        })
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn upsilon(&self) -> &DMatrix<f64> {
        &self.upsilon
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Covariance of the family at correlation strength `eps`.
    pub fn noise_cov_at(&self, eps: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.lambda) + &self.upsilon * eps
    }

    /// `Lambda + eps * Upsilon` at the decomposition's own epsilon.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.noise_cov_at(self.epsilon)
    }
}

/// Weak-correlation information `Jhat = Sigma^-1 + H^T (w w^T o R^-1) H`.
///
/// Defined for any `R`; a faithful approximation of the exact information
/// only when off-diagonal noise correlation is weak.
pub fn fisher_weak(model: &MeasurementModel, w: &SelectionVector) -> Result<FisherMatrix> {
    if w.len() != model.sensor_count() {
        return Err(Error::DimensionMismatch(format!(
            "selection length {} vs {} sensors",
            w.len(),
            model.sensor_count()
        )));
    }
    let r_inv = model.noise_precision();
    let wv = w.as_vector();
    let m = w.len();
    let hadamard = DMatrix::from_fn(m, m, |i, j| wv[i] * wv[j] * r_inv[(i, j)]);
    let info =
        model.prior_precision() + model.obs_matrix().transpose() * hadamard * model.obs_matrix();
    Ok(FisherMatrix::new(info))
}

/// Frobenius error `|J - Jhat|_F` of the weak approximation along a family
/// `R(eps) = Lambda + eps * Upsilon`, one entry per requested epsilon.
///
/// The prior and observation matrix come from `model`; its noise covariance
/// is replaced by the family member. Fails if any member is not positive
/// definite.
pub fn weak_error_order(
    model: &MeasurementModel,
    family: &WeakDecomposition,
    w: &SelectionVector,
    epsilons: &[f64],
) -> Result<Vec<f64>> {
    let mut errors = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let r = family.noise_cov_at(eps);
        let scaled = MeasurementModel::new(
            model.prior_mean().clone(),
            model.prior_cov().clone(),
            model.obs_matrix().clone(),
            r,
        )?;
        let exact = fisher_truncated(&scaled, w)?;
        let approx = fisher_weak(&scaled, w)?;
        errors.push((exact.matrix() - approx.matrix()).norm());
    }
    Ok(errors)
}

/// Quadratic form of the trace-of-information selection problem:
/// maximize `w^T Omega w` with `Omega_ij = (R^-1)_ij h_i^T h_j` over
/// selections with at most `budget` active sensors.
#[derive(Clone, Debug)]
pub struct TraceMaxProblem {
    omega: DMatrix<f64>,
    budget: usize,
}

impl TraceMaxProblem {
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn sensor_count(&self) -> usize {
        self.omega.nrows()
    }

    /// Quadratic value of a Boolean selection.
    pub fn value(&self, w: &SelectionVector) -> f64 {
        let v = w.as_vector();
        (v.transpose() * &self.omega * &v)[(0, 0)]
    }
}

/// Builds `Omega` entrywise and cross-checks it against the equivalent
/// Kronecker form `A (R^-1 x I_n) A^T` with `A` block-diagonal of the
/// observation rows.
pub fn build_trace_max(model: &MeasurementModel, budget: usize) -> Result<TraceMaxProblem> {
    let m = model.sensor_count();
    let n = model.param_dim();
    let r_inv = model.noise_precision();
    let h = model.obs_matrix();
    let omega = DMatrix::from_fn(m, m, |i, j| {
        r_inv[(i, j)] * h.row(i).dot(&h.row(j))
    });

    // Kronecker cross-check.
    let mut a = DMatrix::zeros(m, m * n);
    for i in 0..m {
        for k in 0..n {
            a[(i, i * n + k)] = h[(i, k)];
        }
    }
    let kron = r_inv.kronecker(&DMatrix::identity(n, n));
    let omega_kron = &a * kron * a.transpose();
    if linalg::rel_frobenius(&omega_kron, &omega) > 1e-12 {
        return Err(Error::SolverFailure(
            "Kronecker form of Omega disagrees with entrywise construction".into(),
        ));
    }
    Ok(TraceMaxProblem { omega, budget })
}

/// Closed-form maximizer of `c^T u` over `{u in [0,1]^m : 1^T u <= s}`:
/// set `u_i = 1` for the `s` largest strictly positive entries of `c`,
/// lower indices first on ties.
fn top_s_positive(c: &DVector<f64>, s: usize) -> SelectionVector {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[b].partial_cmp(&c[a]).unwrap().then(a.cmp(&b)));
    let mut bits = vec![false; c.len()];
    for &i in order.iter().take(s) {
        if c[i] > 0.0 {
            bits[i] = true;
        }
    }
    SelectionVector::new(bits)
}

/// One mountain-climbing pass: alternate the two linear programs starting
/// from vertex `start` until the bilinear value stalls, then return the
/// better endpoint under the quadratic objective. The result is a vertex
/// from which another pass gains nothing (within the stall tolerance).
pub fn bilinear_climb_from(
    prob: &TraceMaxProblem,
    start: &SelectionVector,
) -> (SelectionVector, f64) {
    const STALL: f64 = 1e-9;
    let s = prob.budget.min(prob.sensor_count());
    let mut best = start.clone();
    let mut best_value = prob.value(&best);
    loop {
        let mut v = best.clone();
        let mut u = top_s_positive(&(&prob.omega * v.as_vector()), s);
        let mut bilinear = (u.as_vector().transpose() * &prob.omega * v.as_vector())[(0, 0)];
        loop {
            let v_next = top_s_positive(&(&prob.omega * u.as_vector()), s);
            let u_next = top_s_positive(&(&prob.omega * v_next.as_vector()), s);
            let value = (u_next.as_vector().transpose() * &prob.omega * v_next.as_vector())[(0, 0)];
            v = v_next;
            u = u_next;
            let gained = value - bilinear;
            bilinear = value;
            if gained < STALL {
                break;
            }
        }
        let u_val = prob.value(&u);
        let v_val = prob.value(&v);
        let (vertex, value) = if u_val >= v_val { (u, u_val) } else { (v, v_val) };
        if value > best_value + STALL {
            best = vertex;
            best_value = value;
        } else {
            return (best, best_value);
        }
    }
}

/// Multi-start bilinear programming for the trace-max problem: one
/// deterministic start from the `s` largest diagonal entries of `Omega`
/// plus `starts - 1` random `s`-subsets from deterministic RNG streams.
/// Returns the best climbed vertex, always Boolean with at most `budget`
/// active sensors.
pub fn bilinear_solve(
    prob: &TraceMaxProblem,
    starts: usize,
    seed: u64,
) -> (SelectionVector, f64) {
    let m = prob.sensor_count();
    let s = prob.budget.min(m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        prob.omega[(b, b)]
            .partial_cmp(&prob.omega[(a, a)])
            .unwrap()
            .then(a.cmp(&b))
    });
    let diag_start =
        SelectionVector::from_indices(m, &order[..s]).expect("indices in range");
    let (mut best, mut best_value) = bilinear_climb_from(prob, &diag_start);
    for start in 1..starts.max(1) {
        let mut rng = crate::rng::stream(seed, start as u64);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        let vertex = SelectionVector::from_indices(m, &idx[..s]).expect("indices in range");
        let (w, value) = bilinear_climb_from(prob, &vertex);
        if value > best_value + 1e-12 {
            best = w;
            best_value = value;
        }
    }
    (best, best_value)
}

/// Lower bound of the MMSE objective by the information trace:
/// returns `(tr(J_w^-1), n^2 / tr(J_w))`; the first never falls below the
/// second.
pub fn trace_bound_check(model: &MeasurementModel, w: &SelectionVector) -> Result<(f64, f64)> {
    let fisher = fisher_truncated(model, w)?;
    let lhs = fisher.trace_inverse()?;
    let n = model.param_dim() as f64;
    let rhs = n * n / fisher.matrix().trace();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exp_covariance, SensorGeometry};
    use approx::assert_relative_eq;
    use rand_distr::StandardNormal;

    fn toy_model(m: usize, n: usize, rho: f64, seed: u64) -> MeasurementModel {
        let mut rng = crate::rng::stream(seed, 0);
        let geom = SensorGeometry::random_uniform(m, 10.0, 1.0, rho, &mut rng).unwrap();
        let r = exp_covariance(&geom);
        let h = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        MeasurementModel::new(DVector::zeros(n), DMatrix::identity(n, n), h, r).unwrap()
    }

    #[test]
    fn weak_decomposition_reconstructs() {
        let model = toy_model(5, 2, 0.3, 31);
        let d = WeakDecomposition::from_noise_cov(model.noise_cov()).unwrap();
        assert!(linalg::rel_frobenius(&d.reconstruct(), model.noise_cov()) <= 1e-12);
        for i in 0..5 {
            assert_eq!(d.upsilon()[(i, i)], 0.0);
        }
    }

    #[test]
    fn fisher_weak_edge_cases() {
        let model = toy_model(5, 2, 0.3, 32);
        // empty selection -> prior precision
        let none = fisher_weak(&model, &SelectionVector::all_off(5)).unwrap();
        assert!(linalg::rel_frobenius(none.matrix(), model.prior_precision()) <= 1e-12);
        // full selection -> exact information
        let all = fisher_weak(&model, &SelectionVector::all_on(5)).unwrap();
        let exact = fisher_truncated(&model, &SelectionVector::all_on(5)).unwrap();
        assert!(linalg::rel_frobenius(all.matrix(), exact.matrix()) <= 1e-10);
    }

    #[test]
    fn fisher_weak_is_exact_for_diagonal_noise() {
        let mut rng = crate::rng::stream(33, 0);
        let h = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let diag = DVector::from_iterator(6, (0..6).map(|_| 0.5 + rng.random::<f64>()));
        let model = MeasurementModel::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            h,
            DMatrix::from_diagonal(&diag),
        )
        .unwrap();
        let w = SelectionVector::from_indices(6, &[0, 2, 5]).unwrap();
        let weak = fisher_weak(&model, &w).unwrap();
        let exact = fisher_truncated(&model, &w).unwrap();
        assert!(linalg::rel_frobenius(weak.matrix(), exact.matrix()) <= 1e-12);
    }

    #[test]
    fn hadamard_equals_masked_precision_for_boolean_w() {
        let model = toy_model(5, 2, 0.2, 34);
        let w = SelectionVector::from_indices(5, &[1, 3]).unwrap();
        let wv = w.as_vector();
        let r_inv = model.noise_precision();
        let dw = DMatrix::from_diagonal(&wv);
        let masked = &dw * r_inv * &dw;
        let hadamard = DMatrix::from_fn(5, 5, |i, j| wv[i] * wv[j] * r_inv[(i, j)]);
        assert!(linalg::rel_frobenius(&hadamard, &masked) <= 1e-14);
    }

    #[test]
    fn weak_error_vanishes_at_zero_epsilon() {
        let model = toy_model(4, 2, 0.3, 35);
        let family = WeakDecomposition::from_noise_cov(model.noise_cov()).unwrap();
        let w = SelectionVector::from_indices(4, &[0, 2]).unwrap();
        let errs = weak_error_order(&model, &family, &w, &[0.0]).unwrap();
        assert!(errs[0] <= 1e-12);
    }

    #[test]
    fn weak_error_is_second_order() {
        let model = toy_model(6, 2, 0.3, 36);
        let family = WeakDecomposition::from_noise_cov(model.noise_cov()).unwrap();
        let w = SelectionVector::from_indices(6, &[0, 1, 3, 5]).unwrap();
        let eps = [1e-2, 5e-3, 2.5e-3];
        let errs = weak_error_order(&model, &family, &w, &eps).unwrap();
        for k in 0..eps.len() - 1 {
            let ratio = errs[k] / errs[k + 1];
            assert!(
                (3.5..=4.5).contains(&ratio),
                "ratio {ratio} outside quadratic-order band, errors {errs:?}"
            );
        }
    }

    #[test]
    fn single_sensor_error_is_bounded_in_epsilon_squared() {
        let model = toy_model(4, 2, 0.3, 37);
        let family = WeakDecomposition::from_noise_cov(model.noise_cov()).unwrap();
        let w = SelectionVector::from_indices(4, &[2]).unwrap();
        let eps = [1e-2, 5e-3, 2.5e-3];
        let errs = weak_error_order(&model, &family, &w, &eps).unwrap();
        let ratios: Vec<f64> = errs.iter().zip(&eps).map(|(e, x)| e / (x * x)).collect();
        let hi = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi / lo < 2.0, "e/eps^2 not bounded: {ratios:?}");
    }

    #[test]
    fn omega_diagonal_for_identity_noise() {
        let mut rng = crate::rng::stream(38, 0);
        let h = DMatrix::from_fn(4, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let model = MeasurementModel::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            h.clone(),
            DMatrix::identity(4, 4),
        )
        .unwrap();
        let prob = build_trace_max(&model, 2).unwrap();
        for i in 0..4 {
            assert_relative_eq!(
                prob.omega()[(i, i)],
                h.row(i).norm_squared(),
                epsilon = 1e-12
            );
            for j in 0..4 {
                if i != j {
                    assert!(prob.omega()[(i, j)].abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadratic_matches_weak_trace() {
        let model = toy_model(6, 2, 0.4, 39);
        let prob = build_trace_max(&model, 3).unwrap();
        let mut rng = crate::rng::stream(39, 1);
        for _ in 0..40 {
            let bits: Vec<bool> = (0..6).map(|_| rng.random::<bool>()).collect();
            let w = SelectionVector::new(bits);
            let lhs = prob.value(&w) + model.prior_precision().trace();
            let rhs = fisher_weak(&model, &w).unwrap().matrix().trace();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn omega_is_positive_semidefinite() {
        for seed in 40..45 {
            let model = toy_model(6, 2, 0.2, seed);
            let prob = build_trace_max(&model, 3).unwrap();
            assert!(linalg::min_eigenvalue(prob.omega()) >= -1e-9);
        }
    }

    #[test]
    fn bilinear_on_diagonal_omega_selects_largest() {
        let omega = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 3.0, 4.0]));
        let prob = TraceMaxProblem { omega, budget: 2 };
        let (w, value) = bilinear_solve(&prob, 8, 7);
        assert_eq!(w.active_indices(), vec![1, 3]);
        assert_relative_eq!(value, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn bilinear_matches_exhaustive_on_most_instances() {
        use crate::oracle::{exhaustive_search, ExhaustiveObjective};
        let total = 50;
        let mut equal = 0;
        for k in 0..total {
            let model = toy_model(10, 2, 0.2 + 0.01 * k as f64, 400 + k);
            let prob = build_trace_max(&model, 4).unwrap();
            let exh = exhaustive_search(
                &model,
                4,
                ExhaustiveObjective::QuadraticOmega(prob.omega()),
                false,
            )
            .unwrap();
            let (w, value) = bilinear_solve(&prob, 10, 500 + k);
            assert!(w.count_active() <= 4);
            assert!(value <= exh.best_value + 1e-9);
            if (exh.best_value - value).abs() <= 1e-9 * exh.best_value.max(1.0) {
                equal += 1;
            }
        }
        assert!(
            equal * 2 >= total,
            "bilinear matched the exhaustive optimum on only {equal}/{total} instances"
        );
    }

    #[test]
    fn bilinear_returns_feasible_fixed_point() {
        let model = toy_model(8, 2, 0.15, 46);
        let prob = build_trace_max(&model, 3).unwrap();
        let (w, value) = bilinear_solve(&prob, 10, 11);
        assert!(w.count_active() <= 3);
        let (w2, value2) = bilinear_climb_from(&prob, &w);
        assert!(value2 - value <= 1e-9, "restart improved: {value} -> {value2}");
        assert_eq!(w2.active_indices(), w.active_indices());
    }

    #[test]
    fn trace_bound_examples() {
        let model = MeasurementModel::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        // w = 0 -> J = I2 -> (2, 2)
        let (lhs, rhs) = trace_bound_check(&model, &SelectionVector::all_off(2)).unwrap();
        assert_relative_eq!(lhs, 2.0, epsilon = 1e-12);
        assert_relative_eq!(rhs, 2.0, epsilon = 1e-12);
        // J = diag(2, 1): select sensor 0 with h = e1
        let (lhs, rhs) =
            trace_bound_check(&model, &SelectionVector::from_indices(2, &[0]).unwrap()).unwrap();
        assert_relative_eq!(lhs, 1.5, epsilon = 1e-12);
        assert_relative_eq!(rhs, 4.0 / 3.0, epsilon = 1e-12);
        assert!(lhs >= rhs - 1e-10);
    }

    #[test]
    fn trace_bound_holds_on_random_instances() {
        for seed in 47..57 {
            let model = toy_model(6, 3, 0.25, seed);
            let mut rng = crate::rng::stream(seed, 2);
            let bits: Vec<bool> = (0..6).map(|_| rng.random::<bool>()).collect();
            let (lhs, rhs) = trace_bound_check(&model, &SelectionVector::new(bits)).unwrap();
            assert!(lhs >= rhs - 1e-10);
        }
    }
}
