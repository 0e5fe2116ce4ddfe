//! CSV traces and number formatting shared by all reports.

use std::fmt::Write as _;

use lqropt_core::RunTrace;

pub const TRACE_HEADER: &str = "iter,cost,cost_rel_err,gain_rel_err,grad_norm,stepsize,spectral_radius";

/// Scientific notation with 17 significant digits; `nan`, `inf`, `-inf`
/// otherwise.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// One row per iterate; the last row has no step and reports `nan`.
pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            num(r.cost),
            num(r.cost_rel_err),
            num(r.gain_rel_err),
            num(r.grad_norm),
            num(r.stepsize.unwrap_or(f64::NAN)),
            num(r.rho)
        );
    }
    out
}

/// Parsed trace row, used when reading emitted files back.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub cost_rel_err: f64,
    pub gain_rel_err: f64,
    pub grad_norm: f64,
    pub stepsize: f64,
    pub spectral_radius: f64,
}

pub fn parse_trace_csv(text: &str) -> Option<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next()? != TRACE_HEADER {
        return None;
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return None;
            }
            let v = |i: usize| f[i].parse::<f64>().ok();
            Some(TraceRow {
                iter: f[0].parse().ok()?,
                cost: v(1)?,
                cost_rel_err: v(2)?,
                gain_rel_err: v(3)?,
                grad_norm: v(4)?,
                stepsize: v(5)?,
                spectral_radius: v(6)?,
            })
        })
        .collect()
}
