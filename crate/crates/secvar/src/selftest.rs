//! The acceptance suite: every shipped tolerance pinned in code.
//!
//! Each criterion is an independent function returning a pass/fail outcome
//! with a human-readable detail line; the `acceptance` integration test
//! asserts them one by one and the CLI `selftest` verb prints them. Heavy
//! spectra are cached so criteria sharing a discretization do not recompute
//! it.

use std::sync::OnceLock;
use std::time::Instant;

use crate::matfun::Matrix;
use crate::model::{build_lti, build_magnetic, build_oscillator, normalize, CoefficientPath, Problem};
use crate::spectral::{self, SpectrumReport};
use crate::{identities, jacobi};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub description: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2}: {} — {} ({})",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.description,
            self.detail
        )
    }
}

struct Check {
    pass: bool,
    detail: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check {
            pass: true,
            detail: Vec::new(),
        }
    }

    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let err = (got - want).abs();
        let ok = err <= tol;
        self.pass &= ok;
        self.detail.push(format!("{what}: |{got:.10}-{want:.10}|={err:.2e} vs {tol:.0e}"));
    }

    fn below(&mut self, what: &str, got: f64, tol: f64) {
        let ok = got <= tol;
        self.pass &= ok;
        self.detail.push(format!("{what}: {got:.2e} vs {tol:.0e}"));
    }

    fn is_true(&mut self, what: &str, ok: bool) {
        self.pass &= ok;
        self.detail.push(format!("{what}: {ok}"));
    }

    fn into_result(self, id: usize, description: &'static str) -> CriterionResult {
        CriterionResult {
            id,
            description,
            pass: self.pass,
            detail: self.detail.join("; "),
        }
    }
}

fn oscillator_spectrum_4096() -> &'static SpectrumReport {
    static CACHE: OnceLock<SpectrumReport> = OnceLock::new();
    CACHE.get_or_init(|| spectral::spectrum(&build_oscillator(1.0), 4096).expect("spectrum"))
}

fn magnetic_spectrum_4096(r: f64) -> SpectrumReport {
    static CACHE_R1: OnceLock<SpectrumReport> = OnceLock::new();
    if r == 1.0 {
        return CACHE_R1
            .get_or_init(|| spectral::spectrum(&build_magnetic(1.0), 4096).expect("spectrum"))
            .clone();
    }
    spectral::spectrum(&build_magnetic(r), 4096).expect("spectrum")
}

/// Criterion 1: oscillator determinant identity at 4096 steps, 1e-8, under
/// one second.
pub fn criterion_1() -> CriterionResult {
    let mut c = Check::new();
    let t0 = Instant::now();
    let det = jacobi::det_identity(&build_oscillator(1.0), 4096).expect("det");
    let elapsed = t0.elapsed().as_secs_f64();
    c.close("det(I+K)", det, 1.0_f64.sin(), 1e-8);
    c.below("runtime[s]", elapsed, 1.0);
    c.into_result(1, "oscillator r=1: det identity = sin(1) within 1e-8, < 1 s")
}

/// Criterion 2: oscillator trace identity, 1e-8.
pub fn criterion_2() -> CriterionResult {
    let mut c = Check::new();
    let tr = jacobi::trace_identity(&build_oscillator(1.0), 4096).expect("trace");
    c.close("tr K", tr, -1.0 / 6.0, 1e-8);
    c.into_result(2, "oscillator r=1: trace identity = -1/6 within 1e-8")
}

/// Criterion 3: oscillator Galerkin eigenvalues at N=1024 (rel 1e-2 for
/// k=1..5), pv-det plateau within 1e-3 of sin(1) at N=4096, under 30 s.
pub fn criterion_3() -> CriterionResult {
    let mut c = Check::new();
    let t0 = Instant::now();
    let rep = spectral::spectrum(&build_oscillator(1.0), 1024).expect("spectrum");
    for k in 1..=5usize {
        let exact = -1.0 / (std::f64::consts::PI * k as f64).powi(2);
        let rel = ((rep.neg[k - 1] - exact) / exact).abs();
        c.below(&format!("rel err k={k}"), rel, 1e-2);
    }
    let rep4096 = oscillator_spectrum_4096();
    let pv = spectral::pv_det(rep4096, &[]);
    c.is_true("pv-det plateau", pv.converged);
    c.close("pv-det", pv.estimate, 1.0_f64.sin(), 1e-3);
    c.below("runtime[s]", t0.elapsed().as_secs_f64(), 30.0);
    c.into_result(3, "oscillator r=1: Galerkin eigenvalues and pv-det plateau")
}

/// Criterion 4: magnetic paired eigenvalues (gap < 1e-6, k <= 5) and
/// principal values at N=4096.
pub fn criterion_4() -> CriterionResult {
    let mut c = Check::new();
    let rep = spectral::spectrum(&build_magnetic(1.0), 1024).expect("spectrum");
    for k in 1..=5usize {
        let exact = 1.0 / (std::f64::consts::PI * k as f64);
        let a = rep.pos[2 * (k - 1)];
        let b = rep.pos[2 * (k - 1) + 1];
        c.below(&format!("pair gap k={k}"), (a - b).abs(), 1e-6);
        c.below(&format!("pos rel err k={k}"), ((a - exact) / exact).abs(), 1e-2);
        let na = rep.neg[2 * (k - 1)];
        let nb = rep.neg[2 * (k - 1) + 1];
        c.below(&format!("neg pair gap k={k}"), (na - nb).abs(), 1e-6);
    }
    let rep4096 = magnetic_spectrum_4096(1.0);
    let pv = spectral::pv_det(&rep4096, &[]);
    c.is_true("pv-det plateau", pv.converged);
    c.close("pv-det", pv.estimate, 1.0_f64.sin().powi(2), 1e-3);
    let pvt = spectral::pv_trace(&rep4096, &[]);
    c.is_true("pv-trace plateau", pvt.converged);
    c.close("pv-trace", pvt.estimate, 0.0, 1e-6);
    c.into_result(4, "magnetic r=1: paired spectrum and principal values")
}

/// Criterion 5: capacity slopes within 5% of the coefficient integral for
/// one magnetic field strength at N=4096 (the suite runs all three).
pub fn criterion_5_for(r: f64) -> CriterionResult {
    let mut c = Check::new();
    let rep = magnetic_spectrum_4096(r);
    let (_, zi) = spectral::capacity_density(&build_magnetic(r), 4096).expect("zeta");
    c.close("integral zeta", zi, 2.0 * r, 1e-10);
    let est = spectral::capacity_fit(&rep, spectral::default_capacity_window(4096), zi)
        .expect("capacity fit");
    c.below(
        &format!("pos slope rel err (r={r})"),
        (est.fitted_slope_pos - zi).abs() / zi.max(0.1),
        0.05,
    );
    c.below(
        &format!("neg slope rel err (r={r})"),
        (-est.fitted_slope_neg - zi).abs() / zi.max(0.1),
        0.05,
    );
    c.into_result(5, "magnetic capacity slopes within 5% of the zeta integral")
}

/// All three field strengths of criterion 5.
pub fn criterion_5() -> CriterionResult {
    let mut merged = Check::new();
    for r in [0.5, 1.0, 2.0] {
        let part = criterion_5_for(r);
        merged.pass &= part.pass;
        merged.detail.push(part.detail);
    }
    merged.into_result(5, "magnetic r in {0.5, 1, 2}: capacity slopes within 5%")
}

/// Criterion 6: smallest characteristic root of the oscillator.
pub fn criterion_6() -> CriterionResult {
    let mut c = Check::new();
    let p = build_oscillator(1.0);
    let scan = jacobi::spectrum_via_roots(&p, 1.0, 50.0, 4096, 400).expect("scan");
    let root = &scan.roots[0];
    c.close("smallest root", root.s, std::f64::consts::PI.powi(2), 1e-6);
    c.is_true("multiplicity 1", root.multiplicity == 1);
    let rep = spectral::spectrum(&p, 1024).expect("spectrum");
    let rel = ((rep.neg[0] - root.eigenvalue) / root.eigenvalue).abs();
    c.below("eigenvalue vs Galerkin", rel, 1e-2);
    c.into_result(6, "oscillator r=1: char-fn root pi^2, multiplicity 1, Galerkin match")
}

/// Criterion 7: Euler interpolation at a = b = 1 with 1e5 terms.
pub fn criterion_7() -> CriterionResult {
    let mut c = Check::new();
    let chk = identities::euler_interpolation(1.0, 1.0, 100_000);
    c.below("|lhs - sin(1)/sinh(1)|", (chk.lhs - 1.0_f64.sin() / 1.0_f64.sinh()).abs(), 1e-4);
    c.into_result(7, "Euler interpolation a=1, b=1 within 1e-4 at 1e5 terms")
}

/// Criterion 8: matrix determinant identity for A=diag(1,2),
/// R=[[2,1],[1,3]] and agreement with the ODE route.
pub fn criterion_8() -> CriterionResult {
    let mut c = Check::new();
    let a = Matrix::diag(&[1.0, 2.0]);
    let r = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).expect("matrix");
    let chk = identities::euler_det_matrix(&a, &r, 100_000).expect("identity");
    c.below("|lhs - rhs|", chk.abs_gap, 1e-4);
    let p = build_lti(&a, &r).expect("problem");
    let det = jacobi::det_identity(&p, 4096).expect("det");
    c.close("rhs vs det identity", chk.rhs, det, 1e-6);
    c.into_result(8, "matrix determinant identity: three routes agree")
}

/// Criterion 9: commuting trace identity for A=(1), R=(2), pairwise 1e-5.
pub fn criterion_9() -> CriterionResult {
    let mut c = Check::new();
    let a = Matrix::scalar(1.0);
    let r = Matrix::scalar(2.0);
    let chk = identities::euler_trace_matrix(&a, &r, 100_000, 4000).expect("identity");
    let closed = identities::euler_trace_commuting(&a, &r).expect("closed");
    c.close("series vs quadrature", chk.lhs, chk.rhs, 1e-5);
    c.close("series vs closed form", chk.lhs, closed, 1e-5);
    c.close("quadrature vs closed form", chk.rhs, closed, 1e-5);
    c.close("closed form value", closed, 1.0 / 1.0_f64.tanh() - 1.0, 1e-12);
    c.into_result(9, "commuting trace identity: series, quadrature, closed form pairwise 1e-5")
}

/// Random sampled problem with genuinely time-varying negative-definite H,
/// deterministic data.
fn wobbling_sampled_problem() -> Problem {
    let nt = 48;
    let (d, m) = (1usize, 2usize);
    let mut h = Vec::with_capacity(nt);
    let mut y = Vec::with_capacity(nt);
    let mut x = Vec::with_capacity(nt);
    for i in 0..nt {
        let t = (i as f64 + 0.5) / nt as f64;
        // symmetric negative definite with oscillating anisotropy
        let diag0 = -(1.5 + 0.7 * (2.0 * std::f64::consts::PI * t).sin());
        let diag1 = -(2.0 + 0.5 * (3.0 * std::f64::consts::PI * t).cos());
        let off = 0.3 * (5.0 * t).sin();
        h.push(Matrix::new(2, 2, vec![diag0, off, off, diag1]).expect("h"));
        y.push(Matrix::new(1, 2, vec![(1.7 * t).sin(), 0.4 * t * t]).expect("y"));
        x.push(Matrix::new(1, 2, vec![1.0 + 0.2 * (3.0 * t).cos(), 0.5 - 0.3 * t]).expect("x"));
    }
    Problem {
        path: CoefficientPath::sampled(d, m, h, y, x, 1e-8).expect("path"),
        normalized: false,
        label: "sampled-wobble".into(),
    }
}

/// Criterion 10: property suite — symplecticity, the derivative-pairing
/// defect, and normalization invariance of every scalar output.
pub fn criterion_10() -> CriterionResult {
    let mut c = Check::new();

    // symplectic drift across the example problems and s in [-5, 5]
    let a = Matrix::diag(&[1.0, 2.0]);
    let r = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).expect("matrix");
    let problems = [
        build_oscillator(1.0),
        build_magnetic(1.0),
        build_lti(&a, &r).expect("lti"),
    ];
    let mut worst: f64 = 0.0;
    for p in &problems {
        for k in 0..=10 {
            let s = -5.0 + k as f64;
            let fs = jacobi::flow(p, s, 4096).expect("flow");
            worst = worst.max(jacobi::symplectic_defect(&fs));
        }
    }
    c.below("symplectic defect", worst, 1e-9);

    // pairing defect
    let d1 = jacobi::pairing_defect(&build_oscillator(1.0), 1.0, 4096, 1e-5).expect("defect");
    let d2 = jacobi::pairing_defect(&build_magnetic(1.0), 2.0, 4096, 1e-5).expect("defect");
    c.below("pairing defect", d1.max(d2), 1e-6);

    // normalization invariance on a sampled problem with non-constant H
    let p = wobbling_sampled_problem();
    let pn = normalize(&p).expect("normalize");
    let det_a = jacobi::det_identity(&p, 2048).expect("det");
    let det_b = jacobi::det_identity(&pn, 2048).expect("det");
    c.below("normalize det drift", (det_a - det_b).abs(), 1e-9);
    let tr_a = jacobi::trace_identity(&p, 2048).expect("trace");
    let tr_b = jacobi::trace_identity(&pn, 2048).expect("trace");
    c.below("normalize trace drift", (tr_a - tr_b).abs(), 1e-9);
    let sp_a = spectral::spectrum(&p, 96).expect("spectrum");
    let sp_b = spectral::spectrum(&pn, 96).expect("spectrum");
    let mut drift: f64 = 0.0;
    c.is_true(
        "spectrum shapes",
        sp_a.pos.len() == sp_b.pos.len() && sp_a.neg.len() == sp_b.neg.len(),
    );
    for (x, y) in sp_a.pos.iter().zip(&sp_b.pos).chain(sp_a.neg.iter().zip(&sp_b.neg)) {
        drift = drift.max((x - y).abs());
    }
    c.below("normalize spectrum drift", drift, 1e-9);

    c.into_result(10, "property suite: symplecticity, pairing defect, normalize invariance")
}

/// Run the entire suite in order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ]
}
