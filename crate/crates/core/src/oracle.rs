//! Brute-force reference optimizers.
//!
//! These enumerate every feasible selection or schedule and evaluate it with
//! the plain truncated formulas, recomputing from scratch each time. They
//! share only the type layer with the solvers they certify, so a solver bug
//! cannot leak into its own oracle. Subsets are visited in Gray-code order.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{fisher_truncated, MeasurementModel, SelectionVector};
use crate::schedule::{DynamicalSystem, Schedule};

/// Guard on the number of subsets an exhaustive search may evaluate.
const MAX_SUBSETS: f64 = 1e7;

/// Guard on the number of enumerated schedule slots (`2^(tau * m)` patterns).
const MAX_SCHEDULE_SLOTS: usize = 20;

/// Objective evaluated by [`exhaustive_search`].
#[derive(Clone, Copy, Debug)]
pub enum ExhaustiveObjective<'a> {
    /// Minimize the exact MMSE objective `tr(J_w^-1)`.
    TraceInverse,
    /// Minimize the weak-approximation objective `tr(Jhat_w^-1)`.
    TraceFisherWeak,
    /// Maximize the quadratic `w^T Omega w` for the given matrix.
    QuadraticOmega(&'a DMatrix<f64>),
}

/// Direct evaluation of the weak-approximation objective
/// `tr((Sigma^-1 + H^T (w w^T o R^-1) H)^-1)`, independent of the solver
/// modules.
fn weak_trace_inverse_direct(model: &MeasurementModel, w: &SelectionVector) -> Result<f64> {
    let m = model.sensor_count();
    let r_inv = model.noise_precision();
    let wv = w.as_vector();
    let hadamard = DMatrix::from_fn(m, m, |i, j| wv[i] * wv[j] * r_inv[(i, j)]);
    let info =
        model.prior_precision() + model.obs_matrix().transpose() * hadamard * model.obs_matrix();
    linalg::trace_inverse_spd(&linalg::symmetrize(&info), "weak information")
}

/// Outcome of an exhaustive enumeration.
#[derive(Clone, Debug)]
pub struct ExhaustiveResult {
    pub best: SelectionVector,
    pub best_value: f64,
    pub evaluated: usize,
    /// Full `(bitmask, value)` table when requested.
    pub values: Option<Vec<(u64, f64)>>,
}

/// Enumerates every selection with at most `s` active sensors and returns
/// the global optimum of the requested objective. Ties keep the first
/// optimum in enumeration order.
pub fn exhaustive_search(
    model: &MeasurementModel,
    s: usize,
    objective: ExhaustiveObjective<'_>,
    record_values: bool,
) -> Result<ExhaustiveResult> {
    let m = model.sensor_count();
    if m >= 64 {
        return Err(Error::TooLarge(format!("{m} sensors exceed mask width")));
    }
    let subsets = linalg::binomial_sum(m, s.min(m));
    if subsets > MAX_SUBSETS {
        return Err(Error::TooLarge(format!(
            "exhaustive search over {subsets:.3e} subsets exceeds the {MAX_SUBSETS:.0e} guard"
        )));
    }
    let maximize = matches!(objective, ExhaustiveObjective::QuadraticOmega(_));
    let mut best: Option<(SelectionVector, f64)> = None;
    let mut evaluated = 0usize;
    let mut table = if record_values { Some(Vec::new()) } else { None };
    for k in 0u64..(1u64 << m) {
        let mask = k ^ (k >> 1);
        if mask.count_ones() as usize > s {
            continue;
        }
        let w = SelectionVector::from_mask(m, mask);
        let value = match objective {
            ExhaustiveObjective::TraceInverse => fisher_truncated(model, &w)?.trace_inverse()?,
            ExhaustiveObjective::TraceFisherWeak => weak_trace_inverse_direct(model, &w)?,
            ExhaustiveObjective::QuadraticOmega(omega) => {
                let v = w.as_vector();
                (v.transpose() * omega * &v)[(0, 0)]
            }
        };
        evaluated += 1;
        if let Some(t) = table.as_mut() {
            t.push((mask, value));
        }
        let better = match &best {
            None => true,
            Some((_, b)) => {
                if maximize {
                    value > *b
                } else {
                    value < *b
                }
            }
        };
        if better {
            best = Some((w, value));
        }
    }
    let (best, best_value) = best.expect("at least the empty selection is feasible");
    Ok(ExhaustiveResult {
        best,
        best_value,
        evaluated,
        values: table,
    })
}

/// Independent evaluation of the scheduling objective
/// `(1/tau) sum_t tr(J_t^-1)` by direct recursion, recomputed from scratch.
fn schedule_objective_direct(sys: &DynamicalSystem, slots: &[SelectionVector]) -> Result<f64> {
    let tau = slots.len();
    let predictions = sys.prediction_states(tau);
    let mut info = linalg::spd_inverse_eig(sys.initial_cov(), "initial covariance")?;
    let q = sys.process_cov();
    let mut total = 0.0;
    for (t, slot) in slots.iter().enumerate() {
        let f = sys.transition_at(t);
        let pred = q + f * linalg::spd_inverse_chol(&info, "information")? * f.transpose();
        let mut next = linalg::spd_inverse_chol(&pred, "predicted covariance")?;
        let active = slot.active_indices();
        if !active.is_empty() {
            let h = sys.observation_at(t, &predictions[t]);
            let h_w = linalg::select_rows(&h, &active);
            let r_w = linalg::principal_submatrix(sys.noise_cov(), &active);
            let r_w_inv = linalg::spd_inverse_chol(&r_w, "truncated noise covariance")?;
            next += h_w.transpose() * r_w_inv * h_w;
        }
        info = linalg::symmetrize(&next);
        total += linalg::trace_inverse_spd(&info, "information")?;
    }
    Ok(total / tau as f64)
}

/// Enumerates every feasible schedule (cumulative budget `s`, per-sensor
/// budgets `s_i`) over `tau` steps and returns the global optimum of the
/// average-trace objective. The winning schedule is reported as a flattened
/// selection over `tau * m` slots (slot `t * m + i` is sensor `i` at step
/// `t`).
pub fn exhaustive_schedule(
    sys: &DynamicalSystem,
    tau: usize,
    s: usize,
    s_i: &[usize],
) -> Result<ExhaustiveResult> {
    let m = sys.sensor_count();
    if s_i.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} individual budgets for {m} sensors",
            s_i.len()
        )));
    }
    let slots = tau * m;
    if slots > MAX_SCHEDULE_SLOTS {
        return Err(Error::TooLarge(format!(
            "2^{slots} schedules exceed the enumeration guard (tau * m <= {MAX_SCHEDULE_SLOTS})"
        )));
    }
    let mut best: Option<(u64, f64)> = None;
    let mut evaluated = 0usize;
    'outer: for mask in 0u64..(1u64 << slots) {
        if mask.count_ones() as usize > s {
            continue;
        }
        for i in 0..m {
            let count = (0..tau).filter(|t| mask >> (t * m + i) & 1 == 1).count();
            if count > s_i[i] {
                continue 'outer;
            }
        }
        let slot_vecs: Vec<SelectionVector> = (0..tau)
            .map(|t| {
                SelectionVector::new((0..m).map(|i| mask >> (t * m + i) & 1 == 1).collect())
            })
            .collect();
        let value = schedule_objective_direct(sys, &slot_vecs)?;
        evaluated += 1;
        let better = match &best {
            None => true,
            Some((_, b)) => value < *b,
        };
        if better {
            best = Some((mask, value));
        }
    }
    let (mask, best_value) = best.expect("the empty schedule is always feasible");
    Ok(ExhaustiveResult {
        best: SelectionVector::from_mask(slots, mask),
        best_value,
        evaluated,
        values: None,
    })
}

/// Converts a flattened `tau * m` selection back into a schedule.
pub fn schedule_from_flat(flat: &SelectionVector, tau: usize, m: usize) -> Result<Schedule> {
    if flat.len() != tau * m {
        return Err(Error::DimensionMismatch(format!(
            "flat selection length {} vs tau*m = {}",
            flat.len(),
            tau * m
        )));
    }
    let slots: Vec<SelectionVector> = (0..tau)
        .map(|t| SelectionVector::new((0..m).map(|i| flat.is_active(t * m + i)).collect()))
        .collect();
    Schedule::from_slots(slots, tau * m, &vec![tau; m])
}

/// Expected-value table helper: mean over the recorded value table.
pub fn table_mean(result: &ExhaustiveResult) -> Option<f64> {
    result
        .values
        .as_ref()
        .map(|t| t.iter().map(|(_, v)| v).sum::<f64>() / t.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn unit_model(m: usize) -> MeasurementModel {
        MeasurementModel::new(
            DVector::zeros(m.min(2)),
            DMatrix::identity(m.min(2), m.min(2)),
            DMatrix::identity(m, m.min(2)),
            DMatrix::identity(m, m),
        )
        .unwrap()
    }

    #[test]
    fn counts_all_subsets() {
        let model = unit_model(3);
        let res =
            exhaustive_search(&model, 3, ExhaustiveObjective::TraceInverse, false).unwrap();
        assert_eq!(res.evaluated, 8);
    }

    #[test]
    fn two_sensor_tie_keeps_lowest_index() {
        // m = 2, Sigma = I, H = I, R = I, s = 1 -> best value 1.5 at sensor 0
        let model = unit_model(2);
        let res =
            exhaustive_search(&model, 1, ExhaustiveObjective::TraceInverse, true).unwrap();
        assert_relative_eq!(res.best_value, 1.5, epsilon = 1e-12);
        assert_eq!(res.best.active_indices(), vec![0]);
        assert_eq!(res.values.unwrap().len(), 3);
    }

    #[test]
    fn guard_rejects_large_networks() {
        let model = unit_model(40);
        assert!(matches!(
            exhaustive_search(&model, 20, ExhaustiveObjective::TraceInverse, false),
            Err(Error::TooLarge(_))
        ));
    }
}
