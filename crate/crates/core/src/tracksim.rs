//! Target-tracking testbed: white-noise-acceleration dynamics, power
//! attenuation sensing, an extended Kalman filter and Monte Carlo MSE
//! evaluation of scheduling policies.
//!
//! The EKF update uses the noise covariance truncated to the active sensors
//! and then inverted, never the truncated full-network inverse; with
//! correlated noise the two differ materially.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::schedule::{
    fim_recursion, greedy_schedule, random_feasible_schedule, schedule_objective,
    DynamicalSystem, MeasurementFn, Observation, Schedule, Transition,
};

/// White-noise-acceleration model on the 4-state `[x, y, vx, vy]`.
#[derive(Clone, Copy, Debug)]
pub struct Wna4State {
    /// Sampling interval.
    pub delta: f64,
    /// Process-noise intensity.
    pub q: f64,
}

impl Wna4State {
    pub fn transition(&self) -> DMatrix<f64> {
        let d = self.delta;
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, d, 0.0, //
                0.0, 1.0, 0.0, d, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        )
    }

    pub fn process_cov(&self) -> DMatrix<f64> {
        let d = self.delta;
        let d3 = d * d * d / 3.0;
        let d2 = d * d / 2.0;
        DMatrix::from_row_slice(
            4,
            4,
            &[
                d3, 0.0, d2, 0.0, //
                0.0, d3, 0.0, d2, //
                d2, 0.0, d, 0.0, //
                0.0, d2, 0.0, d,
            ],
        ) * self.q
    }
}

/// A sensor reading received signal strength from a power source.
#[derive(Clone, Copy, Debug)]
pub struct PowerSensor {
    pub position: [f64; 2],
    pub source_power: f64,
}

/// Expected reading `sqrt(P0 / (1 + d^2))` with `d` the planar distance from
/// the target position to the sensor.
pub fn measure(sensor: &PowerSensor, state: &DVector<f64>) -> f64 {
    let dx = state[0] - sensor.position[0];
    let dy = state[1] - sensor.position[1];
    (sensor.source_power / (1.0 + dx * dx + dy * dy)).sqrt()
}

/// Analytic measurement Jacobian, a 1x4 row; velocity entries are exactly
/// zero.
pub fn jacobian(sensor: &PowerSensor, state: &DVector<f64>) -> RowDVector<f64> {
    let dx = state[0] - sensor.position[0];
    let dy = state[1] - sensor.position[1];
    let denom = (1.0 + dx * dx + dy * dy).powf(-1.5);
    let scale = sensor.source_power.sqrt();
    RowDVector::from_row_slice(&[-scale * dx * denom, -scale * dy * denom, 0.0, 0.0])
}

/// The full sensor field as a nonlinear measurement map.
#[derive(Clone, Debug)]
pub struct PowerSensorArray {
    sensors: Vec<PowerSensor>,
}

impl PowerSensorArray {
    pub fn new(sensors: Vec<PowerSensor>) -> Self {
        Self { sensors }
    }

    pub fn sensors(&self) -> &[PowerSensor] {
        &self.sensors
    }
}

impl MeasurementFn for PowerSensorArray {
    fn output_dim(&self) -> usize {
        self.sensors.len()
    }

    fn eval(&self, state: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.sensors.len(),
            self.sensors.iter().map(|s| measure(s, state)),
        )
    }

    fn jacobian(&self, state: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.sensors.len(), 4);
        for (i, s) in self.sensors.iter().enumerate() {
            h.row_mut(i).copy_from(&jacobian(s, state));
        }
        h
    }
}

/// One EKF predict-update cycle at step `t`. With no active sensor the
/// update is pure prediction. Measurement `z` holds the readings of the
/// active sensors in ascending sensor order; the noise block is the
/// truncated covariance of exactly those sensors. The covariance update uses
/// the Joseph form.
pub fn ekf_step(
    sys: &DynamicalSystem,
    t: usize,
    estimate: &DVector<f64>,
    cov: &DMatrix<f64>,
    active: &[usize],
    z: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if z.len() != active.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} measurements for {} active sensors",
            z.len(),
            active.len()
        )));
    }
    let f = sys.transition_at(t);
    let x_pred = f * estimate;
    let p_pred = linalg::symmetrize(&(f * cov * f.transpose() + sys.process_cov()));
    if active.is_empty() {
        return Ok((x_pred, p_pred));
    }
    let h_full = sys.observation_at(t, &x_pred);
    let h_w = linalg::select_rows(&h_full, active);
    let r_w = linalg::principal_submatrix(sys.noise_cov(), active);
    let predicted = sys.measure(t, &x_pred);
    let innovation =
        z - DVector::from_iterator(active.len(), active.iter().map(|&i| predicted[i]));
    let s_mat = linalg::symmetrize(&(&h_w * &p_pred * h_w.transpose() + r_w.clone()));
    let s_chol = s_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("innovation covariance".into()))?;
    let gain = &p_pred * h_w.transpose() * s_chol.inverse();
    let x_post = &x_pred + &gain * innovation;
    let n = x_pred.len();
    let i_kh = DMatrix::identity(n, n) - &gain * &h_w;
    let p_post = &i_kh * &p_pred * i_kh.transpose() + &gain * r_w * gain.transpose();
    Ok((x_post, linalg::symmetrize(&p_post)))
}

/// Scheduling policy driving the tracker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerKind {
    Greedy,
    Random,
    AllOn,
}

/// Tracking experiment description.
#[derive(Clone, Debug)]
pub struct TrackConfig {
    pub wna: Wna4State,
    pub sensors: Vec<PowerSensor>,
    pub noise_cov: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    pub steps: usize,
    /// Re-scheduling horizon (window length).
    pub horizon: usize,
    pub cumulative_budget: usize,
    pub individual_budgets: Vec<usize>,
    /// Record the schedules of trial 0 for plotting.
    pub record_snapshots: bool,
}

/// Schedule of one re-planning window of trial 0.
#[derive(Clone, Debug)]
pub struct WindowSnapshot {
    pub start_step: usize,
    /// `slots[t][i]`: sensor `i` active at window step `t`.
    pub slots: Vec<Vec<bool>>,
}

/// Monte Carlo output.
#[derive(Clone, Debug)]
pub struct TrackSummary {
    pub per_step_mse: Vec<f64>,
    pub mean_mse: f64,
    pub trials: usize,
    pub snapshots: Option<Vec<WindowSnapshot>>,
}

fn window_system(cfg: &TrackConfig, est: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DynamicalSystem> {
    DynamicalSystem::new(
        Transition::Constant(cfg.wna.transition()),
        cfg.wna.process_cov(),
        Observation::Nonlinear(Arc::new(PowerSensorArray::new(cfg.sensors.clone()))),
        cfg.noise_cov.clone(),
        est.clone(),
        cov.clone(),
    )
}

struct TrialOutput {
    sq_errors: Vec<f64>,
    snapshots: Option<Vec<WindowSnapshot>>,
}

fn run_trial(
    cfg: &TrackConfig,
    scheduler: SchedulerKind,
    seed: u64,
    trial: usize,
    prior: &linalg::MvnSampler,
    process: &linalg::MvnSampler,
    noise: &linalg::MvnSampler,
) -> Result<TrialOutput> {
    let mut rng_truth = crate::rng::stream(seed, 2 * trial as u64);
    let mut rng_sched = crate::rng::stream(seed, 2 * trial as u64 + 1);
    let m = cfg.sensors.len();
    let f = cfg.wna.transition();
    let mut truth = prior.sample(&mut rng_truth);
    let mut est = cfg.initial_mean.clone();
    let mut cov = cfg.initial_cov.clone();
    let mut sq_errors = Vec::with_capacity(cfg.steps);
    let mut snapshots = if cfg.record_snapshots && trial == 0 {
        Some(Vec::new())
    } else {
        None
    };
    let mut step = 0;
    while step < cfg.steps {
        let win = cfg.horizon.min(cfg.steps - step);
        let sys = window_system(cfg, &est, &cov)?;
        let sched = match scheduler {
            SchedulerKind::Greedy => {
                greedy_schedule(&sys, win, cfg.cumulative_budget, &cfg.individual_budgets)?
                    .schedule
            }
            SchedulerKind::Random => random_feasible_schedule(
                win,
                m,
                cfg.cumulative_budget,
                &cfg.individual_budgets,
                &mut rng_sched,
            )?,
            SchedulerKind::AllOn => Schedule::all_on(win, m),
        };
        if let Some(snaps) = snapshots.as_mut() {
            snaps.push(WindowSnapshot {
                start_step: step,
                slots: sched.slots().iter().map(|w| w.bits().to_vec()).collect(),
            });
        }
        for t in 0..win {
            truth = &f * truth + process.sample(&mut rng_truth);
            let v = noise.sample(&mut rng_truth);
            let active = sched.slot(t).active_indices();
            let z = DVector::from_iterator(
                active.len(),
                active
                    .iter()
                    .map(|&i| measure(&cfg.sensors[i], &truth) + v[i]),
            );
            let (next_est, next_cov) = ekf_step(&sys, t, &est, &cov, &active, &z)?;
            est = next_est;
            cov = next_cov;
            sq_errors.push((&est - &truth).norm_squared());
        }
        step += win;
    }
    Ok(TrialOutput {
        sq_errors,
        snapshots,
    })
}

/// Simulates `trials` tracking runs under the given scheduling policy and
/// returns per-step and aggregate mean squared error. Deterministic for a
/// fixed seed: trial `t` uses RNG streams `2t` (truth and noise) and
/// `2t + 1` (scheduler randomness), so policies see identical noise draws.
pub fn monte_carlo_mse(
    cfg: &TrackConfig,
    scheduler: SchedulerKind,
    trials: usize,
    seed: u64,
) -> Result<TrackSummary> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if cfg.individual_budgets.len() != cfg.sensors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} individual budgets for {} sensors",
            cfg.individual_budgets.len(),
            cfg.sensors.len()
        )));
    }
    let n = cfg.initial_mean.len();
    let prior = linalg::MvnSampler::new(cfg.initial_mean.clone(), &cfg.initial_cov, 1e-9)?;
    let process = linalg::MvnSampler::new(DVector::zeros(n), &cfg.wna.process_cov(), 1e-9)?;
    let noise = linalg::MvnSampler::new(
        DVector::zeros(cfg.sensors.len()),
        &cfg.noise_cov,
        1e-9,
    )?;
    let outputs: Result<Vec<TrialOutput>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, scheduler, seed, t, &prior, &process, &noise))
        .collect();
    let outputs = outputs?;
    let mut per_step = vec![0.0; cfg.steps];
    let mut snapshots = None;
    for out in &outputs {
        for (t, sq) in out.sq_errors.iter().enumerate() {
            per_step[t] += sq;
        }
    }
    if let Some(out) = outputs.into_iter().find(|o| o.snapshots.is_some()) {
        snapshots = out.snapshots;
    }
    for v in per_step.iter_mut() {
        *v /= trials as f64;
    }
    let mean_mse = per_step.iter().sum::<f64>() / cfg.steps as f64;
    Ok(TrackSummary {
        per_step_mse: per_step,
        mean_mse,
        trials,
        snapshots,
    })
}

/// Average-trace value of a schedule under the window system; exposed for
/// baselines and diagnostics.
pub fn schedule_value(sys: &DynamicalSystem, sched: &Schedule) -> Result<f64> {
    schedule_objective(&fim_recursion(sys, sched)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exp_covariance, SensorGeometry};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn test_sensors(m: usize, seed: u64) -> (Vec<PowerSensor>, DMatrix<f64>) {
        let mut rng = crate::rng::stream(seed, 0);
        let geom = SensorGeometry::random_uniform(m, 50.0, 1.0, 0.035, &mut rng).unwrap();
        let sensors = geom
            .positions()
            .iter()
            .map(|&p| PowerSensor {
                position: p,
                source_power: 1e4,
            })
            .collect();
        (sensors, exp_covariance(&geom))
    }

    fn test_config(m: usize, seed: u64) -> TrackConfig {
        let (sensors, noise_cov) = test_sensors(m, seed);
        TrackConfig {
            wna: Wna4State { delta: 1.0, q: 0.01 },
            sensors,
            noise_cov,
            initial_mean: DVector::from_vec(vec![1.0, 1.0, 0.5, 0.5]),
            initial_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.1, 0.1])),
            steps: 12,
            horizon: 3,
            cumulative_budget: m,
            individual_budgets: vec![1; m],
            record_snapshots: false,
        }
    }

    #[test]
    fn measurement_at_sensor_position() {
        let s = PowerSensor {
            position: [3.0, 4.0],
            source_power: 1e4,
        };
        let at = DVector::from_vec(vec![3.0, 4.0, 0.0, 0.0]);
        assert_relative_eq!(measure(&s, &at), 100.0, epsilon = 1e-12);
        // distance^2 = 3, P0 = 4 -> 1
        let s = PowerSensor {
            position: [0.0, 0.0],
            source_power: 4.0,
        };
        let x = DVector::from_vec(vec![3f64.sqrt(), 0.0, 0.0, 0.0]);
        assert_relative_eq!(measure(&s, &x), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measurement_decreases_with_distance() {
        let s = PowerSensor {
            position: [0.0, 0.0],
            source_power: 100.0,
        };
        let mut prev = f64::INFINITY;
        for d in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0] {
            let x = DVector::from_vec(vec![d, 0.0, 0.0, 0.0]);
            let h = measure(&s, &x);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn jacobian_vanishes_at_peak_and_in_velocity() {
        let s = PowerSensor {
            position: [2.0, -1.0],
            source_power: 50.0,
        };
        let at = DVector::from_vec(vec![2.0, -1.0, 3.3, -0.7]);
        let row = jacobian(&s, &at);
        for k in 0..4 {
            assert_eq!(row[k], 0.0);
        }
        let x = DVector::from_vec(vec![4.0, 1.0, 0.2, 0.3]);
        let row = jacobian(&s, &x);
        assert_eq!(row[2], 0.0);
        assert_eq!(row[3], 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = PowerSensor {
            position: [10.0, 20.0],
            source_power: 1e4,
        };
        let x = DVector::from_vec(vec![7.0, 24.0, 0.5, -0.5]);
        let row = jacobian(&s, &x);
        let h = 1e-5;
        for k in 0..2 {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] += h;
            lo[k] -= h;
            let fd = (measure(&s, &hi) - measure(&s, &lo)) / (2.0 * h);
            assert!(
                (row[k] - fd).abs() <= 1e-5 * fd.abs().max(1e-8),
                "component {k}: {} vs {fd}",
                row[k]
            );
        }
    }

    #[test]
    fn ekf_without_measurements_is_pure_prediction() {
        let cfg = test_config(4, 71);
        let sys = window_system(&cfg, &cfg.initial_mean, &cfg.initial_cov).unwrap();
        let (x, p) = ekf_step(
            &sys,
            0,
            &cfg.initial_mean,
            &cfg.initial_cov,
            &[],
            &DVector::zeros(0),
        )
        .unwrap();
        let f = cfg.wna.transition();
        assert_relative_eq!(x, &f * &cfg.initial_mean, epsilon = 1e-14);
        let expect = &f * &cfg.initial_cov * f.transpose() + cfg.wna.process_cov();
        assert!(linalg::rel_frobenius(&p, &expect) <= 1e-12);
    }

    #[test]
    fn ekf_matches_scalar_kalman_filter() {
        // one linear sensor observing the first state component
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let sys = DynamicalSystem::new(
            Transition::Constant(DMatrix::identity(2, 2)),
            DMatrix::identity(2, 2) * 0.1,
            Observation::Linear(h),
            DMatrix::from_element(1, 1, 0.5),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let est = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let z = DVector::from_vec(vec![1.7]);
        let (x, p) = ekf_step(&sys, 0, &est, &cov, &[0], &z).unwrap();
        // hand-rolled scalar update on component 0 (diagonal cov stays diagonal)
        let p_pred0 = 2.0 + 0.1;
        let k = p_pred0 / (p_pred0 + 0.5);
        let x0 = 1.0 + k * (1.7 - 1.0);
        let p0 = (1.0 - k) * p_pred0;
        assert_relative_eq!(x[0], x0, epsilon = 1e-10);
        assert_relative_eq!(x[1], -2.0, epsilon = 1e-10);
        assert_relative_eq!(p[(0, 0)], p0, epsilon = 1e-10);
        assert_relative_eq!(p[(1, 1)], 3.1, epsilon = 1e-10);
    }

    #[test]
    fn measurements_never_inflate_covariance() {
        let cfg = test_config(5, 72);
        let sys = window_system(&cfg, &cfg.initial_mean, &cfg.initial_cov).unwrap();
        let mut rng = crate::rng::stream(72, 3);
        let mut est = cfg.initial_mean.clone();
        let mut cov = cfg.initial_cov.clone();
        for t in 0..4 {
            let f = cfg.wna.transition();
            let p_pred = &f * &cov * f.transpose() + cfg.wna.process_cov();
            let active = vec![t % 5];
            let truth = est.clone();
            let z = DVector::from_vec(vec![
                measure(&cfg.sensors[active[0]], &truth) + 0.01 * rng.random::<f64>(),
            ]);
            let (x, p) = ekf_step(&sys, t, &est, &cov, &active, &z).unwrap();
            // posterior <= predicted in the PSD order
            let gap = &p_pred - &p;
            assert!(linalg::min_eigenvalue(&gap) >= -1e-9);
            assert!(linalg::min_eigenvalue(&p) >= 0.0);
            est = x;
            cov = p;
        }
    }

    #[test]
    fn truncate_then_invert_differs_from_inverted_then_truncated() {
        // strongly correlated field: the two orders of truncation/inversion
        // must produce materially different information matrices
        let (_, noise_cov) = test_sensors(6, 73);
        let strong = {
            let mut rng = crate::rng::stream(73, 1);
            let geom =
                SensorGeometry::random_uniform(6, 50.0, 1.0, 0.01, &mut rng).unwrap();
            exp_covariance(&geom)
        };
        let _ = noise_cov;
        let active = [0usize, 2, 4];
        let r_w = linalg::principal_submatrix(&strong, &active);
        let correct = linalg::spd_inverse_eig(&r_w, "rw").unwrap();
        let wrong = linalg::principal_submatrix(
            &linalg::spd_inverse_eig(&strong, "r").unwrap(),
            &active,
        );
        assert!(linalg::rel_frobenius(&wrong, &correct) >= 1e-3);
    }

    #[test]
    fn noiseless_all_on_tracking_converges() {
        let mut cfg = test_config(6, 74);
        cfg.wna.q = 0.0;
        cfg.noise_cov = DMatrix::identity(6, 6) * 1e-12;
        cfg.steps = 60;
        cfg.cumulative_budget = 6 * cfg.horizon;
        cfg.individual_budgets = vec![cfg.horizon; 6];
        let summary = monte_carlo_mse(&cfg, SchedulerKind::AllOn, 3, 75).unwrap();
        let first = summary.per_step_mse[0];
        let tail = *summary.per_step_mse.last().unwrap();
        assert!(tail < 1e-4, "tail MSE {tail}");
        assert!(tail < 1e-3 * first, "no decay: {first} -> {tail}");
        for pair in summary.per_step_mse.windows(2) {
            assert!(pair[1] <= pair[0] * 2.0, "MSE diverging: {pair:?}");
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let cfg = test_config(4, 76);
        let a = monte_carlo_mse(&cfg, SchedulerKind::Random, 5, 77).unwrap();
        let b = monte_carlo_mse(&cfg, SchedulerKind::Random, 5, 77).unwrap();
        assert_eq!(a.per_step_mse, b.per_step_mse);
        assert_eq!(a.mean_mse, b.mean_mse);
    }

    #[test]
    fn snapshots_recorded_for_first_trial() {
        let mut cfg = test_config(4, 78);
        cfg.record_snapshots = true;
        let summary = monte_carlo_mse(&cfg, SchedulerKind::Greedy, 2, 79).unwrap();
        let snaps = summary.snapshots.unwrap();
        assert_eq!(snaps.len(), cfg.steps / cfg.horizon);
        for snap in &snaps {
            assert_eq!(snap.slots.len(), cfg.horizon);
        }
    }
}
