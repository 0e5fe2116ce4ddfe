//! Policy optimization for discrete-time LQR with indefinite penalties.
//!
//! - [`matlin`]: small dense kernel (eigenvalues, norms, discrete Lyapunov solves)
//! - [`lqr`]: problem data, stability classification, cost, gradient
//! - [`dare`]: certified Riccati fixed point used as ground truth
//! - [`policy`]: gradient, natural gradient and quasi-Newton iterations
//! - [`instances`]: the 5-state benchmark and random instance generators

// Negated float comparisons are used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dare;
pub mod error;
pub mod instances;
pub mod lqr;
pub mod matlin;
pub mod policy;

pub use dare::{solve_dare, solve_dare_from_zero, verify_global_optimality, DareSolution, OptimalityReport};
pub use error::{Error, Result};
pub use lqr::{
    classify_gain, cost_by_simulation, dominance_bounds, evaluate, evaluate_gain,
    value_difference_residual, DominanceBounds, Gain, ProblemInstance, ValueBundle,
};
pub use matlin::{Mat, SymEig};
pub use policy::{
    check_phi, direction, estimate_rate, linear_envelope_violation, run, run_from, run_recorded, stepsize_gd,
    stepsize_ngd, stepsize_qn,
    Direction, GdStepConstants, IterationRecord, Method, RateEstimate, RateModel, RunOutcome, RunTrace,
    StopRule,
};
