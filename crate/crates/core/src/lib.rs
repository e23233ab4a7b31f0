//! Sensor selection and scheduling for Bayesian estimation under correlated
//! measurement noise.
//!
//! The crate builds linear Gaussian measurement models whose noise is
//! correlated across sensors, expresses the Bayesian Fisher information as an
//! explicit function of the Boolean activation pattern, and offers several
//! routes to near-optimal activations under energy budgets:
//!
//! - [`model`]: measurement model, covariance split and the exact truncated,
//!   closed-form and uncorrelated information formulas;
//! - [`greedy`]: rank-one information updates and the greedy selection loop;
//! - [`relaxation`]: semidefinite relaxations with randomized rounding,
//!   solved through an interior-point conic backend;
//! - [`weakcorr`]: the weak-correlation approximation, its order-of-validity
//!   check, and trace-of-information selection by bilinear programming;
//! - [`schedule`]: recursive information for dynamical systems and the
//!   non-myopic greedy scheduler with cumulative and per-sensor budgets;
//! - [`tracksim`]: a target-tracking testbed (white-noise-acceleration
//!   dynamics, power-attenuation sensing, EKF, Monte Carlo MSE);
//! - [`oracle`]: exhaustive-search references kept independent of the
//!   solvers they certify;
//! - [`verify`]: the end-to-end verification suite behind `sensel verify`.

pub mod error;
pub mod greedy;
pub mod instances;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod relaxation;
pub mod rng;
pub mod schedule;
pub mod tracksim;
pub mod verify;
pub mod weakcorr;

pub use error::{Error, Result};
pub use greedy::{greedy_select, GreedySelection, GreedyState, GreedyUpdate};
pub use model::{
    decompose_covariance, empirical_mse, exp_covariance, fisher_closed_form, fisher_truncated,
    fisher_uncorrelated, objective_trace_inverse, CovDecomposition, FisherMatrix,
    MeasurementModel, SelectionVector, SensorGeometry,
};
pub use oracle::{exhaustive_schedule, exhaustive_search, ExhaustiveObjective, ExhaustiveResult};
pub use relaxation::{
    build_sdp_general, build_sdp_weak, randomize_round, round_top_s, solve_sdp, solve_sdp_with,
    RoundingResult, SdpBackend, SdpKind, SdpProblem, SdpSolution,
};
pub use schedule::{
    fim_recursion, greedy_schedule, random_feasible_schedule, schedule_objective,
    DynamicalSystem, GreedyScheduleResult, Observation, RecursiveFim, Schedule, Transition,
};
pub use tracksim::{
    ekf_step, jacobian, measure, monte_carlo_mse, PowerSensor, PowerSensorArray, SchedulerKind,
    TrackConfig, TrackSummary, Wna4State,
};
pub use weakcorr::{
    bilinear_solve, build_trace_max, fisher_weak, trace_bound_check, weak_error_order,
    TraceMaxProblem, WeakDecomposition,
};
