//! Report orchestration: runs the Jacobi, Galerkin and closed-form routes
//! over one problem and emits self-describing JSON-lines records.
//!
//! Every record carries its method route and settings in `provenance`;
//! cross-route discrepancies above the stated tolerance are flagged inside
//! the records, never dropped. Output is deterministic byte-for-byte for a
//! fixed configuration, up to the `timestamp` field.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{build_problem, ProblemSpec, RunConfig};
use crate::error::{Error, Result};
use crate::matfun;
use crate::model::{self, Problem};
use crate::spectral::{self, SpectrumReport};
use crate::{identities, jacobi};

/// One report line.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord {
    pub kind: String,
    pub payload: Value,
    pub provenance: Value,
    pub timestamp: String,
}

/// Outcome classification for exit codes: inconclusive marks a missing
/// principal-value plateau (numerical, not fatal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Clean,
    Inconclusive,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn record(kind: &str, payload: Value, provenance: Value) -> ReportRecord {
    ReportRecord {
        kind: kind.to_string(),
        payload,
        provenance,
        timestamp: now(),
    }
}

fn flag(diff: f64, tol: f64) -> Value {
    json!({
        "discrepancy": diff,
        "tolerance": tol,
        "flagged": diff.abs() > tol,
    })
}

/// Closed-form regularized determinant and trace for the families that
/// have one (used for the identity records of the non-LTI problems).
fn closed_forms(spec: &ProblemSpec) -> Option<(String, f64, f64)> {
    match spec {
        ProblemSpec::Oscillator { r } => Some((
            format!("oscillator-euler(r={r})"),
            matfun::psi(-*r, 1.0),
            -*r / 6.0,
        )),
        ProblemSpec::Magnetic { r } => Some((
            format!("magnetic-euler-squared(r={r})"),
            matfun::psi(-r * r, 1.0).powi(2),
            0.0,
        )),
        _ => None,
    }
}

/// Run every route over the configured problem and emit the records in the
/// fixed order: det, trace, spectrum, pv-det, pv-trace, capacity, roots,
/// then identity records where a closed form exists. A module error aborts
/// the remaining records with a diagnostic record.
pub fn run_report(cfg: &RunConfig) -> (Vec<ReportRecord>, RunStatus, Option<Error>) {
    let mut records = Vec::new();
    let mut status = RunStatus::Clean;
    match run_report_inner(cfg, &mut records, &mut status) {
        Ok(()) => (records, status, None),
        Err(e) => {
            records.push(record(
                "diagnostic",
                json!({ "error": e.to_string() }),
                json!({ "route": "orchestrator" }),
            ));
            (records, status, Some(e))
        }
    }
}

fn run_report_inner(
    cfg: &RunConfig,
    records: &mut Vec<ReportRecord>,
    status: &mut RunStatus,
) -> Result<()> {
    let m = &cfg.method;
    let problem = build_problem(cfg)?;
    let problem = model::normalize(&problem)?;

    // 1-2: Jacobi route
    let det = jacobi::det_identity(&problem, m.steps)?;
    records.push(record(
        "det",
        json!({ "value": det, "problem": problem.label }),
        json!({ "route": "jacobi-ode", "steps": m.steps }),
    ));
    let trace = jacobi::trace_identity(&problem, m.steps)?;
    records.push(record(
        "trace",
        json!({ "value": trace, "problem": problem.label }),
        json!({ "route": "jacobi-ode", "steps": m.steps }),
    ));

    // 3: Galerkin spectrum
    let rep = spectral::spectrum(&problem, m.galerkin_n)?;
    let head = |v: &[f64]| -> Vec<f64> { v.iter().take(32).copied().collect() };
    records.push(record(
        "spectrum",
        json!({
            "n_pos": rep.pos.len(),
            "n_neg": rep.neg.len(),
            "pos_head": head(&rep.pos),
            "neg_head": head(&rep.neg),
            "problem": problem.label,
        }),
        json!({ "route": "galerkin", "n": m.galerkin_n }),
    ));

    // 4-5: principal-value series with cross-route comparison
    let pv_d = spectral::pv_det(&rep, &[]);
    if !pv_d.converged {
        *status = RunStatus::Inconclusive;
    }
    records.push(record(
        "pv-det",
        json!({
            "estimate": pv_d.estimate,
            "converged": pv_d.converged,
            "series": pv_d.series,
            "jacobi_value": det,
            "cross_route": flag(pv_d.estimate - det, 1e-3),
        }),
        json!({ "route": "galerkin-pv", "n": m.galerkin_n }),
    ));
    let pv_t = spectral::pv_trace(&rep, &[]);
    if !pv_t.converged {
        *status = RunStatus::Inconclusive;
    }
    records.push(record(
        "pv-trace",
        json!({
            "estimate": pv_t.estimate,
            "converged": pv_t.converged,
            "series": pv_t.series,
            "jacobi_value": trace,
            "cross_route": flag(pv_t.estimate - trace, 1e-3),
        }),
        json!({ "route": "galerkin-pv", "n": m.galerkin_n }),
    ));

    // 6: capacity
    let (_, zeta_integral) = spectral::capacity_density(&problem, m.galerkin_n)?;
    let window = spectral::default_capacity_window(m.galerkin_n);
    let cap = spectral::capacity_fit(&rep, window, zeta_integral)?;
    let denom = zeta_integral.max(0.1);
    records.push(record(
        "capacity",
        json!({
            "integral_zeta": cap.integral_zeta,
            "fitted_slope_pos": cap.fitted_slope_pos,
            "fitted_slope_neg": cap.fitted_slope_neg,
            "window": [window.0, window.1],
            "pos_check": flag((cap.fitted_slope_pos - zeta_integral) / denom, 0.05),
            "neg_check": flag((-cap.fitted_slope_neg - zeta_integral) / denom, 0.05),
        }),
        json!({ "route": "galerkin-capacity", "n": m.galerkin_n, "window": [window.0, window.1] }),
    ));

    // 7: characteristic-function roots with Galerkin cross-check
    let scan = jacobi::spectrum_via_roots(&problem, m.s_lo, m.s_hi, m.steps, m.s_grid)?;
    let root_checks: Vec<Value> = scan
        .roots
        .iter()
        .map(|root| {
            let branch = if root.eigenvalue > 0.0 { &rep.pos } else { &rep.neg };
            let nearest = branch
                .iter()
                .fold(f64::INFINITY, |best, &g| {
                    let rel = ((g - root.eigenvalue) / root.eigenvalue).abs();
                    best.min(rel)
                });
            json!({
                "s": root.s,
                "eigenvalue": root.eigenvalue,
                "multiplicity": root.multiplicity,
                "galerkin_check": flag(nearest, 1e-2),
            })
        })
        .collect();
    records.push(record(
        "roots",
        json!({
            "roots": root_checks,
            "widen_advisory": scan.widen_advisory,
        }),
        json!({
            "route": "char-fn-scan",
            "s_lo": m.s_lo,
            "s_hi": m.s_hi,
            "grid": m.s_grid,
            "steps": m.steps,
        }),
    ));

    // 8: identity records
    match &cfg.problem {
        ProblemSpec::Lti { a, r } => {
            let chk = identities::euler_det_matrix(a, r, m.n_terms)?;
            records.push(record(
                "identity",
                json!({
                    "name": chk.name,
                    "lhs": chk.lhs,
                    "rhs": chk.rhs,
                    "abs_gap": chk.abs_gap,
                    "internal": flag(chk.abs_gap, 1e-4),
                    "jacobi_value": det,
                    "cross_route": flag(chk.rhs - det, 1e-6),
                }),
                json!({ "route": "closed-form", "n_terms": m.n_terms }),
            ));
            let chk = identities::euler_trace_matrix(a, r, m.n_terms, m.identity_nq)?;
            // eigenvalues are alpha = -s: the operator trace is minus the series
            records.push(record(
                "identity",
                json!({
                    "name": chk.name,
                    "lhs": chk.lhs,
                    "rhs": chk.rhs,
                    "abs_gap": chk.abs_gap,
                    "internal": flag(chk.abs_gap, 1e-4),
                    "jacobi_value": trace,
                    "cross_route": flag(chk.lhs + trace, 1e-5),
                }),
                json!({ "route": "closed-form", "n_terms": m.n_terms, "nq": m.identity_nq }),
            ));
            if let Ok(closed) = identities::euler_trace_commuting(a, r) {
                records.push(record(
                    "identity",
                    json!({
                        "name": "euler-trace-commuting",
                        "lhs": chk.lhs,
                        "rhs": closed,
                        "abs_gap": (chk.lhs - closed).abs(),
                        "internal": flag(chk.lhs - closed, 1e-5),
                    }),
                    json!({ "route": "closed-form", "n_terms": m.n_terms }),
                ));
            }
        }
        spec => {
            if let Some((name, det_closed, trace_closed)) = closed_forms(spec) {
                records.push(record(
                    "identity",
                    json!({
                        "name": name,
                        "det_closed": det_closed,
                        "det_jacobi": det,
                        "det_check": flag(det - det_closed, 1e-6),
                        "trace_closed": trace_closed,
                        "trace_jacobi": trace,
                        "trace_check": flag(trace - trace_closed, 1e-6),
                    }),
                    json!({ "route": "closed-form" }),
                ));
            }
        }
    }
    Ok(())
}

/// Render records as JSON lines (one record per line, trailing newline).
pub fn to_jsonl(records: &[ReportRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    out
}

/// Write the spectrum CSV with the exact header `n,alpha,branch`.
pub fn write_spectrum_csv(rep: &SpectrumReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "n,alpha,branch")?;
    for (i, a) in rep.pos.iter().enumerate() {
        writeln!(w, "{},{},pos", i + 1, a)?;
    }
    for (i, a) in rep.neg.iter().enumerate() {
        writeln!(w, "{},{},neg", i + 1, a)?;
    }
    Ok(())
}

/// The Galerkin spectrum for the configured problem (the `spectrum` verb).
pub fn spectrum_for(cfg: &RunConfig) -> Result<(Problem, SpectrumReport)> {
    let problem = build_problem(cfg)?;
    let rep = spectral::spectrum(&problem, cfg.method.galerkin_n)?;
    Ok((problem, rep))
}
