//! Runs the configured methods against one instance and writes the traces.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;

use lqropt_core::policy::{ENVELOPE_SLACK, RATE_CV_MAX, RATE_NOISE_FLOOR};
use lqropt_core::{
    classify_gain, evaluate_gain, linear_envelope_violation, run_recorded, solve_dare, verify_global_optimality,
    DareSolution, Error, Gain, Mat, Method, ProblemInstance, RunTrace, StopRule,
};
use lqropt_core::matlin::lambda_min;
use lqropt_core::dare::DARE_RESIDUAL_TOL;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::report::{num, trace_csv};

pub const DARE_MAX_ITER: usize = 500;
/// Gains sampled around `K*` when checking global optimality.
pub const OPTIMALITY_SAMPLES: usize = 200;
const MAX_LISTED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success,
    Validation,
    ConvergenceFailure,
    InvariantViolation,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Validation => 2,
            ExitStatus::ConvergenceFailure => 3,
            ExitStatus::InvariantViolation => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub trace: RunTrace,
    pub failure: Option<Error>,
    pub violations: Vec<String>,
    pub envelope_violation: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DareReport {
    pub solution: DareSolution,
    pub hstar_min: f64,
    pub nstar_norm: f64,
    pub optimality_margin: Option<f64>,
    pub optimality_passed: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub status: ExitStatus,
    /// Named failing checks, empty on success.
    pub reasons: Vec<String>,
    pub dare: Result<DareReport, Error>,
    pub runs: Vec<MethodRun>,
    pub summary: String,
}

impl ExperimentReport {
    pub fn run(&self, method: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == method)
    }
}

/// Runs every configured method, concurrently, from `K0`.
///
/// The Riccati fixed point supplies the reference for the error columns. If
/// it cannot be certified the methods still run, unreferenced, as
/// diagnostics, and the experiment fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentReport {
    let p = &cfg.instance;
    let k0 = match classify_gain(p, &cfg.k0) {
        Ok(g) if g.stabilizing => g,
        Ok(g) => return rejected(cfg, format!("{}", Error::NoStabilizingSeed { rho: g.rho })),
        Err(e) => return rejected(cfg, format!("K0: {e}")),
    };
    let dare = certify(cfg, &k0);
    let reference = dare.as_ref().ok().map(|d| &d.solution);
    let stop = StopRule {
        grad_tol: cfg.grad_tol,
        max_iter: cfg.max_iter,
    };

    let runs: Vec<MethodRun> = thread::scope(|s| {
        let handles: Vec<_> = cfg
            .methods
            .iter()
            .map(|&method| {
                let k0 = &k0;
                s.spawn(move || run_method(p, k0, method, reference, stop))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimizer thread panicked")).collect()
    });

    let mut status = ExitStatus::Success;
    let mut reasons = Vec::new();
    if let Err(e) = &dare {
        status = ExitStatus::ConvergenceFailure;
        reasons.push(format!("dare: {e}"));
    }
    for run in &runs {
        if let Some((s, reason)) = verdict(run, dare.is_ok()) {
            status = status.max(s);
            reasons.push(format!("{}: {reason}", run.method));
        }
    }
    if let Ok(d) = &dare {
        if !d.optimality_passed {
            status = status.max(ExitStatus::InvariantViolation);
            reasons.push("dare: a sampled stabilizing gain beats K*".into());
        }
    }
    let summary = summarize(cfg, &k0, &dare, &runs, status, &reasons);
    ExperimentReport {
        status,
        reasons,
        dare,
        runs,
        summary,
    }
}

fn rejected(cfg: &ExperimentConfig, reason: String) -> ExperimentReport {
    let mut summary = String::new();
    let _ = writeln!(summary, "lqropt experiment: {}", cfg.origin);
    let _ = writeln!(summary, "exit: 2 (validation: {reason})");
    ExperimentReport {
        status: ExitStatus::Validation,
        reasons: vec![reason],
        dare: Err(Error::InvalidInstance("not attempted".into())),
        runs: Vec::new(),
        summary,
    }
}

fn certify(cfg: &ExperimentConfig, k0: &Gain) -> Result<DareReport, Error> {
    let p = &cfg.instance;
    let solution = solve_dare(p, k0, cfg.dare_tol, DARE_MAX_ITER)?;
    let hstar_min = lambda_min(&solution.hstar)?;
    let nstar_norm = evaluate_gain(p, &solution.kstar)?.n.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let optimality = verify_global_optimality(p, &solution, OPTIMALITY_SAMPLES, &mut rng)?;
    Ok(DareReport {
        solution,
        hstar_min,
        nstar_norm,
        optimality_margin: optimality.worst_margin,
        optimality_passed: optimality.passed(),
    })
}

fn run_method(
    p: &ProblemInstance,
    k0: &Gain,
    method: Method,
    reference: Option<&DareSolution>,
    stop: StopRule,
) -> MethodRun {
    let outcome = run_recorded(p, k0, method, reference, stop).expect("seed was checked to be stabilizing");
    let violations = outcome.trace.invariant_violations();
    let envelope_violation = linear_envelope_violation(&outcome.trace, ENVELOPE_SLACK);
    MethodRun {
        method,
        trace: outcome.trace,
        failure: outcome.failure,
        violations,
        envelope_violation,
    }
}

/// Exit class and reason for one run. Without a certified reference a
/// failed run only confirms the missing minimizer, so it counts as a
/// convergence failure.
fn verdict(run: &MethodRun, certified: bool) -> Option<(ExitStatus, String)> {
    let hard = if certified {
        ExitStatus::InvariantViolation
    } else {
        ExitStatus::ConvergenceFailure
    };
    if let Some(e) = &run.failure {
        let class = match e {
            Error::StabilityLost { .. } => hard,
            _ => ExitStatus::ConvergenceFailure,
        };
        return Some((class, short_error(e)));
    }
    if let Some(v) = run.violations.first() {
        return Some((hard, format!("invariant violated: {v}")));
    }
    if !run.trace.converged {
        return Some((
            ExitStatus::ConvergenceFailure,
            format!("not converged after {} iterations", run.trace.iterations()),
        ));
    }
    None
}

/// The error's first line, without the diagnostic dump.
fn short_error(e: &Error) -> String {
    e.to_string().lines().next().unwrap_or_default().to_string()
}

fn is_identity(m: &Mat) -> bool {
    m.is_square() && *m == Mat::identity(m.nrows(), m.ncols())
}

fn summarize(
    cfg: &ExperimentConfig,
    k0: &Gain,
    dare: &Result<DareReport, Error>,
    runs: &[MethodRun],
    status: ExitStatus,
    reasons: &[String],
) -> String {
    let p = &cfg.instance;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "lqropt experiment: {}", cfg.origin);
    let _ = writeln!(w, "instance: n = {}, m = {}", p.n(), p.m());
    let sigma_shape = if is_identity(p.sigma()) { "identity" } else { "general" };
    let _ = writeln!(w, "Sigma: {sigma_shape} ({})", cfg.sigma_source);
    let k0_shape = if cfg.k0.iter().all(|&v| v == 0.0) { "zero" } else { "general" };
    let _ = writeln!(w, "K0: {k0_shape} ({}), rho(A - B K0) = {}", cfg.k0_source, num(k0.rho));
    let _ = writeln!(
        w,
        "stop rule: grad_tol = {}, max_iter = {}; dare_tol = {}; seed = {}",
        num(cfg.grad_tol),
        cfg.max_iter,
        num(cfg.dare_tol),
        cfg.seed
    );

    let _ = writeln!(w, "\n[dare]");
    match dare {
        Ok(d) => {
            let sol = &d.solution;
            let _ = writeln!(w, "status: certified");
            let _ = writeln!(w, "iterations: {}", sol.iterations);
            let _ = writeln!(
                w,
                "riccati residual: {} (bound {})",
                num(sol.residual),
                num(DARE_RESIDUAL_TOL * (1.0 + sol.xstar.norm()))
            );
            let _ = writeln!(w, "lambda_1(R + B'X*B): {}", num(d.hstar_min));
            let _ = writeln!(w, "rho(A - B K*): {}", num(sol.rho_star));
            let _ = writeln!(w, "||N(K*)||_F: {}", num(d.nstar_norm));
            let _ = writeln!(w, "f(K*): {}", num(sol.cost(p)));
            let margin = d.optimality_margin.map_or("none".into(), num);
            let _ = writeln!(
                w,
                "optimality sampling: {OPTIMALITY_SAMPLES} stabilizing gains, worst f(K) - f(K*) = {margin}, {}",
                if d.optimality_passed { "passed" } else { "FAILED" }
            );
        }
        Err(e) => {
            let _ = writeln!(w, "status: FAILED");
            let _ = writeln!(w, "error: {}", short_error(e));
            let _ = writeln!(w, "note: no certified reference; error columns are nan and runs are diagnostic");
        }
    }

    for run in runs {
        let t = &run.trace;
        let last = t.last();
        let _ = writeln!(w, "\n[{}]", run.method);
        let state = match (&run.failure, t.converged) {
            (Some(e), _) => format!("failed: {}", short_error(e)),
            (None, true) => "converged".into(),
            (None, false) => "not converged (max_iter reached)".into(),
        };
        let _ = writeln!(w, "status: {state}");
        let _ = writeln!(w, "iterations: {}", t.iterations());
        let _ = writeln!(w, "initial cost: {}", num(t.records[0].cost));
        let _ = writeln!(w, "final cost: {}", num(last.cost));
        let _ = writeln!(w, "final cost_rel_err: {}", num(last.cost_rel_err));
        let _ = writeln!(w, "final gain_rel_err: {}", num(last.gain_rel_err));
        let _ = writeln!(w, "final grad_norm: {}", num(last.grad_norm));
        let steps: Vec<f64> = t.records.iter().filter_map(|r| r.stepsize).collect();
        if !steps.is_empty() {
            let lo = steps.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = steps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(w, "stepsize range: [{}, {}]", num(lo), num(hi));
        }
        let rho_max = t.records.iter().map(|r| r.rho).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(w, "max spectral radius: {}", num(rho_max));
        if run.method == Method::Gd {
            let phi_min = t
                .records
                .iter()
                .filter_map(|r| r.gd.as_ref().map(|g| g.phi))
                .fold(f64::INFINITY, f64::min);
            if phi_min.is_finite() {
                let _ = writeln!(w, "min phi(eta): {}", num(phi_min));
            }
        }
        match &t.rate_estimate {
            Some(r) => {
                let _ = writeln!(
                    w,
                    "rate: {} model, parameter {}, {} ({} gaps; linear q = {}, cv = {}; quadratic q = {}, cv = {})",
                    r.model,
                    num(r.parameter),
                    if r.stable { "stable" } else { "unstable" },
                    r.samples,
                    num(r.linear_parameter),
                    num(r.linear_cv),
                    num(r.quadratic_parameter),
                    num(r.quadratic_cv)
                );
                let envelope = match run.envelope_violation {
                    None => "holds".to_string(),
                    Some(j) => format!("first exceeded at j = {j}"),
                };
                let _ = writeln!(w, "linear envelope e_j <= (q + {ENVELOPE_SLACK})^j e_0: {envelope}");
            }
            None => {
                let _ = writeln!(w, "rate: not fitted (needs a reference and 4 gaps above the noise floor)");
            }
        }
        if run.violations.is_empty() {
            let _ = writeln!(w, "invariants: ok");
        } else {
            let _ = writeln!(w, "invariants: {} violated", run.violations.len());
            for v in run.violations.iter().take(MAX_LISTED) {
                let _ = writeln!(w, "  - {v}");
            }
        }
        for e in t.events.iter().take(MAX_LISTED) {
            let _ = writeln!(w, "event: {e}");
        }
        if let Some(Error::StabilityLost { diagnostics, .. }) = &run.failure {
            let _ = writeln!(w, "diagnostics:");
            for line in diagnostics.lines() {
                let _ = writeln!(w, "  {line}");
            }
        }
    }

    let _ = writeln!(
        w,
        "\nrate fitting: tail half of the ratio sequence of gaps above {RATE_NOISE_FLOOR:e} (1 + |f*|); \
         a model is stable when its coefficient of variation is below {RATE_CV_MAX}"
    );
    if reasons.is_empty() {
        let _ = writeln!(w, "exit: 0 (all runs converged, all checks passed)");
    } else {
        let _ = writeln!(w, "exit: {}", status.code());
        for r in reasons {
            let _ = writeln!(w, "  - {r}");
        }
    }
    s
}

/// Writes `<method>_trace.csv` per run and `summary.txt` into `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &report.runs {
        let path = dir.join(format!("{}_trace.csv", run.method));
        fs::write(&path, trace_csv(&run.trace))?;
        written.push(path);
    }
    let path = dir.join("summary.txt");
    fs::write(&path, &report.summary)?;
    written.push(path);
    Ok(written)
}
