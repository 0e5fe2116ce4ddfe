//! Policy iterations on the stabilizing set.
//!
//! Three update rules share one template, `K+ = K - eta D(K)`:
//!
//! | method | direction `D(K)`        | stepsize                          |
//! |--------|-------------------------|-----------------------------------|
//! | GD     | `2 N Y`                 | `min(eta0, c0)` (perturbation bound) |
//! | NGD    | `2 N`                   | `1 / (2 lambda_max(R + B'XB))`    |
//! | QN     | `2 (R + B'XB)^{-1} N`   | `1/2`                             |
//!
//! All three stepsizes keep every iterate stabilizing even when `Q` and `R`
//! are indefinite, so leaving the stabilizing set is reported as
//! [`Error::StabilityLost`] rather than recovered from.

use std::fmt;

use crate::dare::DareSolution;
use crate::error::{Error, Result};
use crate::lqr::{classify_gain, evaluate, evaluate_gain, Gain, ProblemInstance, ValueBundle};
use crate::matlin::{lambda_max, lambda_min, solve_spd, spectral_norm, Mat};

/// Safety factor applied to the strict upper bound defining `c0`.
pub const C0_SAFETY: f64 = 0.99;
/// Smallest GD stepsize accepted before the run is declared stuck.
pub const MIN_STEPSIZE: f64 = 1e-12;
/// Relative tolerance of the exact one-step decrease identity in [`check_phi`].
pub const PHI_IDENTITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gd,
    Ngd,
    Qn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gd, Method::Ngd, Method::Qn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Ngd => "ngd",
            Method::Qn => "qn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Some(Method::Gd),
            "ngd" => Some(Method::Ngd),
            "qn" => Some(Method::Qn),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub kind: Method,
    pub matrix: Mat,
}

pub fn direction(p: &ProblemInstance, bundle: &ValueBundle, kind: Method) -> Result<Direction> {
    let matrix = match kind {
        Method::Gd => bundle.grad.clone(),
        Method::Ngd => &bundle.n * 2.0,
        Method::Qn => {
            let h_min = lambda_min(&bundle.h)?;
            if h_min <= 1e-12 * spectral_norm(&bundle.h) {
                return Err(Error::SingularCurvature);
            }
            solve_spd(&bundle.h, &(&bundle.n * 2.0)).ok_or(Error::SingularCurvature)?
        }
    };
    debug_assert_eq!(matrix.shape(), (p.m(), p.n()));
    Ok(Direction { kind, matrix })
}

/// `1 / (2 lambda_max(R + B'XB))`.
pub fn stepsize_ngd(bundle: &ValueBundle) -> Result<f64> {
    let top = lambda_max(&bundle.h)?;
    if top <= 0.0 {
        return Err(Error::NonPositiveCurvature { lambda_min: top });
    }
    Ok(1.0 / (2.0 * top))
}

pub fn stepsize_qn() -> f64 {
    0.5
}

/// Constants of the gradient stepsize rule at one iterate.
///
/// `eta0` bounds the perturbation `||Y_eta||_2 <= beta0 ||Y||_2`; `c0` is the
/// positive root of `a2 c^2 + a1 c = 1` shrunk by [`C0_SAFETY`]; the step is
/// `eta = min(eta0, c0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdStepConstants {
    /// `lambda_max(R + B'XB)`
    pub a: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub eta0: f64,
    pub beta0: f64,
    pub a1: f64,
    pub a2: f64,
    pub c0: f64,
    pub eta: f64,
}

pub fn stepsize_gd(p: &ProblemInstance, bundle: &ValueBundle) -> Result<GdStepConstants> {
    let n_norm = spectral_norm(&bundle.n);
    if n_norm == 0.0 {
        return Err(Error::InvalidInstance(
            "gradient stepsize requested at a stationary point".into(),
        ));
    }
    let a = lambda_max(&bundle.h)?;
    if a <= 0.0 {
        return Err(Error::NonPositiveCurvature { lambda_min: a });
    }
    let y_norm = spectral_norm(&bundle.y);
    let bny = spectral_norm(&(p.b() * &bundle.n * &bundle.y));
    if bny == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let sigma_min = lambda_min(p.sigma())?;
    let ak_norm = spectral_norm(&bundle.ak);

    let mu1 = y_norm * bny * bny / sigma_min;
    let mu2 = y_norm * bny * ak_norm / sigma_min;
    // (sqrt(mu1 + mu2^2) - mu2) / (4 mu1), rationalized
    let eta0 = 1.0 / (4.0 * ((mu1 + mu2 * mu2).sqrt() + mu2));
    let beta0 = 1.0 / (1.0 - 4.0 * mu1 * eta0 * eta0 - 4.0 * mu2 * eta0);
    if !(beta0 > 0.0 && beta0.is_finite()) {
        return Err(Error::IllConditioned(format!("beta0 = {beta0} is not positive")));
    }

    let a1 = a * beta0 * y_norm + 4.0 * n_norm * beta0 * y_norm * y_norm;
    let a2 = a * 4.0 * n_norm * beta0 * y_norm * y_norm;
    // sqrt(1/a2 + a1^2/(4 a2^2)) - a1/(2 a2), rationalized
    let root = 2.0 / (a1 + (a1 * a1 + 4.0 * a2).sqrt());
    let c0 = C0_SAFETY * root;
    Ok(GdStepConstants {
        a,
        mu1,
        mu2,
        eta0,
        beta0,
        a1,
        a2,
        c0,
        eta: eta0.min(c0),
    })
}

/// The gradient step `K_eta = K - 2 eta N Y` and its decrease accounting.
#[derive(Debug, Clone)]
pub struct PhiEvaluation {
    pub eta: f64,
    /// `Tr(N'N (Y Y_eta - eta a Y Y_eta Y))`
    pub phi: f64,
    /// `f(K) - f(K_eta)`
    pub cost_decrease: f64,
    /// `4 eta (Tr(N'N Y Y_eta) - eta Tr(N'HN Y Y_eta Y))`, equal to
    /// `cost_decrease` up to solver error and bounded below by `4 eta phi`.
    pub exact_decrease: f64,
    pub k_eta: Mat,
    pub y_eta: Mat,
    pub rho_eta: f64,
}

pub fn check_phi(p: &ProblemInstance, bundle: &ValueBundle, eta: f64) -> Result<PhiEvaluation> {
    let k_eta = &bundle.k - &bundle.grad * eta;
    let gain = classify_gain(p, &k_eta)?;
    if !gain.stabilizing {
        return Err(Error::LeftStabilityRegion { rho: gain.rho });
    }
    let stepped = match evaluate(p, &gain) {
        Ok(b) => b,
        Err(Error::NotStabilizing { rho }) => return Err(Error::LeftStabilityRegion { rho }),
        Err(e) => return Err(e),
    };
    let y_eta = stepped.y.clone();
    let a = lambda_max(&bundle.h)?;

    let ntn = bundle.n.transpose() * &bundle.n;
    let y_yeta = &bundle.y * &y_eta;
    let y_yeta_y = &y_yeta * &bundle.y;
    let linear = (&ntn * &y_yeta).trace();
    let phi = linear - eta * a * (&ntn * &y_yeta_y).trace();
    let nhn = bundle.n.transpose() * &bundle.h * &bundle.n;
    let exact_decrease = 4.0 * eta * (linear - eta * (nhn * &y_yeta_y).trace());
    let cost_decrease = bundle.cost - stepped.cost;

    let gap = (cost_decrease - exact_decrease).abs();
    if gap > PHI_IDENTITY_TOL * (1.0 + bundle.cost.abs()) {
        return Err(Error::IllConditioned(format!(
            "one-step decrease identity off by {gap:.3e}"
        )));
    }
    Ok(PhiEvaluation {
        eta,
        phi,
        cost_decrease,
        exact_decrease,
        k_eta,
        y_eta,
        rho_eta: gain.rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Stop once `||N||_F <= grad_tol (1 + ||X||_F)`.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 500,
        }
    }
}

/// Per-step data specific to gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct GdDiagnostics {
    /// `None` when the degenerate-direction fallback chose the step.
    pub constants: Option<GdStepConstants>,
    pub phi: f64,
    pub y_norm: f64,
    pub y_eta_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub k: Mat,
    pub x: Mat,
    pub cost: f64,
    pub rho: f64,
    /// Step taken from this iterate; `None` on the last record.
    pub stepsize: Option<f64>,
    pub grad_norm: f64,
    pub gain_rel_err: f64,
    pub cost_rel_err: f64,
    pub gd: Option<GdDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    Linear,
    Quadratic,
}

impl fmt::Display for RateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateModel::Linear => "linear",
            RateModel::Quadratic => "quadratic",
        })
    }
}

/// Fitted convergence model for `e_j = f(K_j) - f(K*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub model: RateModel,
    /// Max tail ratio under the selected model.
    pub parameter: f64,
    /// Whether the selected model's tail ratios have CV below [`RATE_CV_MAX`].
    pub stable: bool,
    pub linear_parameter: f64,
    pub linear_cv: f64,
    pub quadratic_parameter: f64,
    pub quadratic_cv: f64,
    /// Number of error samples used.
    pub samples: usize,
}

/// Coefficient-of-variation threshold for calling a ratio sequence stable.
pub const RATE_CV_MAX: f64 = 0.5;
/// Errors at or below `RATE_NOISE_FLOOR (1 + |f*|)` are roundoff and dropped.
pub const RATE_NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub rate_estimate: Option<RateEstimate>,
    pub optimal_cost: f64,
    /// Notable non-fatal events, such as the GD fallback step.
    pub events: Vec<String>,
}

impl RunTrace {
    /// Number of updates performed.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace has at least one record")
    }

    /// `f(K_j) - f(K*)` per record.
    pub fn cost_gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost - self.optimal_cost).collect()
    }

    /// Checks every runtime guarantee of the method; returns one message per
    /// violation.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.records {
            if !(r.rho < 1.0) {
                out.push(format!("iterate {} not stabilizing (rho = {})", r.iter, r.rho));
            }
        }
        for pair in self.records.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            let slack = 1e-9 * (1.0 + prev.cost.abs());
            if next.cost > prev.cost + slack {
                out.push(format!(
                    "cost increased at iterate {}: {} -> {}",
                    next.iter, prev.cost, next.cost
                ));
            }
            if matches!(self.method, Method::Ngd | Method::Qn) {
                let bound = 1e-9 * (1.0 + prev.x.norm());
                match lambda_max(&(&next.x - &prev.x)) {
                    Ok(top) if top <= bound => {}
                    Ok(top) => out.push(format!(
                        "value matrix increased at iterate {} (lambda_max = {top:.3e})",
                        next.iter
                    )),
                    Err(e) => out.push(format!("value matrix check failed: {e}")),
                }
            }
        }
        for r in &self.records {
            if let Some(gd) = &r.gd {
                if gd.phi < -1e-10 {
                    out.push(format!("phi negative at iterate {}: {}", r.iter, gd.phi));
                }
                if let (Some(c), Some(eta)) = (gd.constants, r.stepsize) {
                    if eta <= c.eta0 && gd.y_eta_norm > c.beta0 * gd.y_norm * (1.0 + 1e-8) {
                        out.push(format!(
                            "perturbation bound violated at iterate {}: {} > {} * {}",
                            r.iter, gd.y_eta_norm, c.beta0, gd.y_norm
                        ));
                    }
                }
            }
        }
        out
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn diagnostics(bundle: &ValueBundle, eta: f64, rho: f64) -> String {
    format!(
        "eta = {eta:e}, rho(next) = {rho}, cost = {}\nK = {}\nX = {}\nN = {}",
        bundle.cost,
        rows(&bundle.k),
        rows(&bundle.x),
        rows(&bundle.n)
    )
}

/// `[a, b; c, d]`, full precision.
fn rows(m: &Mat) -> String {
    let body: Vec<String> = m
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", body.join("; "))
}

/// Fallback for a vanishing `B N Y`: halve a unit step until the update is
/// stabilizing and `phi >= 0`.
fn fallback_gd_step(p: &ProblemInstance, bundle: &ValueBundle) -> Result<PhiEvaluation> {
    let mut eta = 1.0;
    for _ in 0..80 {
        match check_phi(p, bundle, eta) {
            Ok(eval) if eval.phi >= 0.0 => return Ok(eval),
            Ok(_) | Err(Error::LeftStabilityRegion { .. }) => eta *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateDirection)
}

/// A run together with the error that stopped it early, if any. The trace
/// keeps every record produced before the failure.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub failure: Option<Error>,
}

/// Iterates `K_{j+1} = K_j - eta_j D(K_j)` with the method's stepsize.
pub fn run(
    p: &ProblemInstance,
    k0: &Gain,
    kind: Method,
    star: &DareSolution,
    stop: StopRule,
) -> Result<RunTrace> {
    let outcome = run_recorded(p, k0, kind, Some(star), stop)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(outcome.trace),
    }
}

/// Like [`run`], but keeps the partial trace when an iteration fails and
/// works without a reference solution (error columns are then NaN).
///
/// Only an invalid seed is returned as `Err`.
pub fn run_recorded(
    p: &ProblemInstance,
    k0: &Gain,
    kind: Method,
    reference: Option<&DareSolution>,
    stop: StopRule,
) -> Result<RunOutcome> {
    if !k0.stabilizing {
        return Err(Error::NoStabilizingSeed { rho: k0.rho });
    }
    let mut bundle = evaluate(p, k0).map_err(|e| match e {
        Error::NotStabilizing { rho } => Error::NoStabilizingSeed { rho },
        other => other,
    })?;
    let fstar = reference.map_or(f64::NAN, |s| s.cost(p));
    let mut trace = RunTrace {
        method: kind,
        records: Vec::new(),
        converged: false,
        rate_estimate: None,
        optimal_cost: fstar,
        events: Vec::new(),
    };
    let mut rho = k0.rho;
    let mut failure = None;

    for iter in 0.. {
        let grad_norm = bundle.n.norm();
        let (gain_rel_err, cost_rel_err) = match reference {
            Some(star) => (
                rel((&bundle.k - &star.kstar).norm(), star.kstar.norm()),
                rel(bundle.cost - fstar, fstar.abs()),
            ),
            None => (f64::NAN, f64::NAN),
        };
        let mut record = IterationRecord {
            iter,
            k: bundle.k.clone(),
            x: bundle.x.clone(),
            cost: bundle.cost,
            rho,
            stepsize: None,
            grad_norm,
            gain_rel_err,
            cost_rel_err,
            gd: None,
        };
        if grad_norm <= stop.grad_tol * (1.0 + bundle.x.norm()) {
            trace.converged = true;
            trace.records.push(record);
            break;
        }
        if iter >= stop.max_iter {
            trace.records.push(record);
            break;
        }

        let stepped = step(p, &bundle, kind, iter, &mut record, &mut trace.events);
        trace.records.push(record);
        match stepped {
            Ok((gain, next)) => {
                rho = gain.rho;
                bundle = next;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    if reference.is_some() {
        trace.rate_estimate = estimate_rate(&trace).ok();
    }
    Ok(RunOutcome { trace, failure })
}

/// One update from `bundle`; fills the stepsize and GD diagnostics of
/// `record` and returns the evaluated next iterate.
fn step(
    p: &ProblemInstance,
    bundle: &ValueBundle,
    kind: Method,
    iter: usize,
    record: &mut IterationRecord,
    events: &mut Vec<String>,
) -> Result<(Gain, ValueBundle)> {
    let lost = |eta: f64, rho: f64| Error::StabilityLost {
        iteration: iter,
        diagnostics: diagnostics(bundle, eta, rho),
    };
    let (k_next, eta) = match kind {
        Method::Gd => {
            let (constants, eval) = match stepsize_gd(p, bundle) {
                Ok(c) => (Some(c), check_phi(p, bundle, c.eta)),
                Err(Error::DegenerateDirection) => {
                    events.push(format!("iterate {iter}: B N Y vanished, halving fallback used"));
                    (None, fallback_gd_step(p, bundle))
                }
                Err(e) => return Err(e),
            };
            let eval = eval.map_err(|e| match e {
                Error::LeftStabilityRegion { rho } => {
                    lost(constants.map_or(f64::NAN, |c| c.eta), rho)
                }
                other => other,
            })?;
            if eval.eta < MIN_STEPSIZE {
                events.push(format!("iterate {iter}: stepsize {:e} below floor", eval.eta));
            }
            record.gd = Some(GdDiagnostics {
                constants,
                phi: eval.phi,
                y_norm: spectral_norm(&bundle.y),
                y_eta_norm: spectral_norm(&eval.y_eta),
            });
            (eval.k_eta, eval.eta)
        }
        Method::Ngd | Method::Qn => {
            let eta = if kind == Method::Ngd {
                stepsize_ngd(bundle)?
            } else {
                stepsize_qn()
            };
            let d = direction(p, bundle, kind)?;
            (&bundle.k - d.matrix * eta, eta)
        }
    };
    record.stepsize = Some(eta);

    let gain = classify_gain(p, &k_next)?;
    if !gain.stabilizing {
        return Err(lost(eta, gain.rho));
    }
    match evaluate(p, &gain) {
        Ok(next) => Ok((gain, next)),
        Err(Error::NotStabilizing { rho }) => Err(lost(eta, rho)),
        Err(e) => Err(e),
    }
}

/// Convenience wrapper: classify `k0` and run.
pub fn run_from(
    p: &ProblemInstance,
    k0: &Mat,
    kind: Method,
    star: &DareSolution,
    stop: StopRule,
) -> Result<RunTrace> {
    run(p, &classify_gain(p, k0)?, kind, star, stop)
}

/// Fits the convergence model to a trace's cost gaps above the noise floor.
pub fn estimate_rate(trace: &RunTrace) -> Result<RateEstimate> {
    let floor = RATE_NOISE_FLOOR * (1.0 + trace.optimal_cost.abs());
    estimate_rate_from_errors(&trace.cost_gaps(), floor)
}

/// Slack added to the fitted linear ratio in [`linear_envelope_violation`].
pub const ENVELOPE_SLACK: f64 = 0.05;

/// First `j` with `e_j > (q + slack)^j e_0`, where `q` is the fitted linear
/// tail ratio; `None` when the envelope holds over every gap above the
/// noise floor or no linear fit exists.
pub fn linear_envelope_violation(trace: &RunTrace, slack: f64) -> Option<usize> {
    let rate = trace.rate_estimate.as_ref()?;
    let q = rate.linear_parameter + slack;
    let floor = RATE_NOISE_FLOOR * (1.0 + trace.optimal_cost.abs());
    let gaps = trace.cost_gaps();
    let e0 = *gaps.first()?;
    gaps.iter()
        .enumerate()
        .take_while(|(_, &e)| e > floor)
        .find(|(j, &e)| e > q.powi(*j as i32) * e0 * (1.0 + 1e-12))
        .map(|(j, _)| j)
}

/// Fits linear (`e+ <= q e`) and quadratic (`e+ <= q e^2`) models to the
/// leading run of errors above `floor`, judging each on the tail half of its
/// ratio sequence.
pub fn estimate_rate_from_errors(errors: &[f64], floor: f64) -> Result<RateEstimate> {
    let kept: Vec<f64> = errors.iter().copied().take_while(|&e| e > floor).collect();
    if kept.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: kept.len(),
        });
    }
    let linear: Vec<f64> = kept.windows(2).map(|w| w[1] / w[0]).collect();
    let quadratic: Vec<f64> = kept.windows(2).map(|w| w[1] / (w[0] * w[0])).collect();
    let tail_len = linear.len().div_ceil(2).max(2);
    let tail = |v: &[f64]| v[v.len() - tail_len..].to_vec();
    let (lin_tail, quad_tail) = (tail(&linear), tail(&quadratic));
    let (linear_cv, quadratic_cv) = (cv(&lin_tail), cv(&quad_tail));
    let linear_parameter = lin_tail.iter().copied().fold(f64::MIN, f64::max);
    let quadratic_parameter = quad_tail.iter().copied().fold(f64::MIN, f64::max);

    let (model, parameter, chosen_cv) = if linear_cv <= quadratic_cv {
        (RateModel::Linear, linear_parameter, linear_cv)
    } else {
        (RateModel::Quadratic, quadratic_parameter, quadratic_cv)
    };
    Ok(RateEstimate {
        model,
        parameter,
        stable: chosen_cv < RATE_CV_MAX,
        linear_parameter,
        linear_cv,
        quadratic_parameter,
        quadratic_cv,
        samples: kept.len(),
    })
}

fn cv(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return f64::INFINITY;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Fixed-point gain `(R + B'XB)^{-1} B'XA` at `k`; the QN step with
/// `eta = 1/2` lands exactly here.
pub fn hewer_gain(p: &ProblemInstance, k: &Mat) -> Result<Mat> {
    let b = evaluate_gain(p, k)?;
    solve_spd(&b.h, &(p.b().transpose() * &b.x * p.a())).ok_or(Error::SingularCurvature)
}
