//! Linear-quadratic problem data on the unit time interval.
//!
//! A problem is the triple of coefficient paths `t -> (H_t, Y_t, X_t)` with
//! `H_t` an m-by-m symmetric negative-definite control Hessian and
//! `(Y_t, X_t)` the d-by-m blocks of the phase-space map
//! `Z_t v = (Y_t v, X_t v)`. Paths are either sampled on uniform cells
//! (midpoint values, linear interpolation in between) or closed-form.
//!
//! [`normalize`] moves any problem to coordinates with `H_t = -I` by the
//! substitution `v -> (-H_t)^{1/2} v`, which leaves the spectrum of the
//! second-variation operator unchanged.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matfun::{self, Matrix};

/// Default margin for the Legendre condition: the largest eigenvalue of
/// `H_t` must stay below `-eps`.
pub const DEFAULT_LEGENDRE_MARGIN: f64 = 1e-8;

/// Coefficient values at one time.
#[derive(Debug, Clone)]
pub struct Coeffs {
    pub h: Matrix,
    pub y: Matrix,
    pub x: Matrix,
}

type ClosedEval = Arc<dyn Fn(f64) -> Coeffs + Send + Sync>;

enum PathData {
    /// Midpoint samples on `nt` uniform cells of `[0,1]`.
    Sampled {
        nt: usize,
        h: Vec<Matrix>,
        y: Vec<Matrix>,
        x: Vec<Matrix>,
    },
    Closed(ClosedEval),
}

/// Time-dependent problem data `(H_t, Y_t, X_t)` on `[0,1]`.
pub struct CoefficientPath {
    d: usize,
    m: usize,
    data: PathData,
}

impl Clone for CoefficientPath {
    fn clone(&self) -> Self {
        let data = match &self.data {
            PathData::Sampled { nt, h, y, x } => PathData::Sampled {
                nt: *nt,
                h: h.clone(),
                y: y.clone(),
                x: x.clone(),
            },
            PathData::Closed(f) => PathData::Closed(f.clone()),
        };
        CoefficientPath {
            d: self.d,
            m: self.m,
            data,
        }
    }
}

impl std::fmt::Debug for CoefficientPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.data {
            PathData::Sampled { nt, .. } => format!("sampled(nt={nt})"),
            PathData::Closed(_) => "closed-form".to_string(),
        };
        write!(f, "CoefficientPath(d={}, m={}, {kind})", self.d, self.m)
    }
}

impl CoefficientPath {
    /// Build a sampled path from midpoint values, validating dimensions,
    /// symmetry of every `H` sample, and the Legendre margin.
    pub fn sampled(
        d: usize,
        m: usize,
        h: Vec<Matrix>,
        y: Vec<Matrix>,
        x: Vec<Matrix>,
        legendre_margin: f64,
    ) -> Result<Self> {
        let nt = h.len();
        if nt == 0 {
            return Err(Error::InvalidArgument(
                "sampled path needs at least one cell (nt >= 1)".into(),
            ));
        }
        if y.len() != nt || x.len() != nt {
            return Err(Error::Dimension(format!(
                "sample counts disagree: H has {nt}, Y has {}, X has {}",
                y.len(),
                x.len()
            )));
        }
        for (i, hi) in h.iter().enumerate() {
            if hi.rows() != m || hi.cols() != m {
                return Err(Error::Dimension(format!(
                    "H must be {m}x{m}, got {}x{} at cell {i}",
                    hi.rows(),
                    hi.cols()
                )));
            }
            hi.check_symmetric(1e-10, &format!("H at cell {i}"))?;
            let eig = matfun::sym_eigen(hi)?;
            let max = eig.values.last().copied().unwrap_or(0.0);
            if max >= -legendre_margin {
                return Err(Error::LegendreCondition(format!(
                    "H not negative-definite at cell {i}: largest eigenvalue {max:.3e} \
                     (margin {legendre_margin:.0e})"
                )));
            }
        }
        for (i, (yi, xi)) in y.iter().zip(&x).enumerate() {
            for (name, mat) in [("Y", yi), ("X", xi)] {
                if mat.rows() != d || mat.cols() != m {
                    return Err(Error::Dimension(format!(
                        "{name} must be {d}x{m}, got {}x{} at cell {i}",
                        mat.rows(),
                        mat.cols()
                    )));
                }
            }
        }
        Ok(CoefficientPath {
            d,
            m,
            data: PathData::Sampled { nt, h, y, x },
        })
    }

    pub fn closed(d: usize, m: usize, eval: impl Fn(f64) -> Coeffs + Send + Sync + 'static) -> Self {
        CoefficientPath {
            d,
            m,
            data: PathData::Closed(Arc::new(eval)),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn cells(&self) -> Option<usize> {
        match &self.data {
            PathData::Sampled { nt, .. } => Some(*nt),
            PathData::Closed(_) => None,
        }
    }

    /// Evaluate the path at time `t`. Sampled paths interpolate linearly
    /// between cell midpoints and clamp beyond the first and last midpoint.
    pub fn eval(&self, t: f64) -> Coeffs {
        match &self.data {
            PathData::Closed(f) => f(t),
            PathData::Sampled { nt, h, y, x } => {
                let nt = *nt;
                if nt == 1 {
                    return Coeffs {
                        h: h[0].clone(),
                        y: y[0].clone(),
                        x: x[0].clone(),
                    };
                }
                let u = t * nt as f64 - 0.5;
                if u <= 0.0 {
                    return Coeffs {
                        h: h[0].clone(),
                        y: y[0].clone(),
                        x: x[0].clone(),
                    };
                }
                if u >= (nt - 1) as f64 {
                    return Coeffs {
                        h: h[nt - 1].clone(),
                        y: y[nt - 1].clone(),
                        x: x[nt - 1].clone(),
                    };
                }
                let i = u.floor() as usize;
                let w = u - i as f64;
                let lerp = |a: &Matrix, b: &Matrix| a.scale(1.0 - w).add(&b.scale(w));
                Coeffs {
                    h: lerp(&h[i], &h[i + 1]),
                    y: lerp(&y[i], &y[i + 1]),
                    x: lerp(&x[i], &x[i + 1]),
                }
            }
        }
    }
}

/// A labelled problem; `normalized` records that `H_t = -I` holds.
#[derive(Debug, Clone)]
pub struct Problem {
    pub path: CoefficientPath,
    pub normalized: bool,
    pub label: String,
}

impl Problem {
    pub fn state_dim(&self) -> usize {
        self.path.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.path.control_dim()
    }
}

/// Move a problem to `H_t = -I` coordinates.
///
/// Idempotent: an already-normalized problem is returned as-is (flag-guarded,
/// so repeated normalization is byte-identical). Substitutes
/// `Y_t -> Y_t (-H_t)^{-1/2}`, `X_t -> X_t (-H_t)^{-1/2}`; the spectrum of
/// the second-variation operator is unchanged because the quadratic form is
/// the same in the new coordinates.
pub fn normalize(p: &Problem) -> Result<Problem> {
    if p.normalized {
        return Ok(p.clone());
    }
    let m = p.control_dim();
    match &p.path.data {
        PathData::Sampled { nt, h, y, x } => {
            let mut nh = Vec::with_capacity(*nt);
            let mut ny = Vec::with_capacity(*nt);
            let mut nx = Vec::with_capacity(*nt);
            for i in 0..*nt {
                let neg_h = h[i].scale(-1.0);
                let p_inv = matfun::sym_inv_sqrt(&neg_h).map_err(|e| match e {
                    Error::NotPositiveDefinite(msg) => Error::LegendreCondition(format!(
                        "H not negative-definite at cell {i}: {msg}"
                    )),
                    other => other,
                })?;
                nh.push(Matrix::identity(m).scale(-1.0));
                ny.push(y[i].matmul(&p_inv));
                nx.push(x[i].matmul(&p_inv));
            }
            Ok(Problem {
                path: CoefficientPath {
                    d: p.path.d,
                    m,
                    data: PathData::Sampled {
                        nt: *nt,
                        h: nh,
                        y: ny,
                        x: nx,
                    },
                },
                normalized: true,
                label: p.label.clone(),
            })
        }
        PathData::Closed(f) => {
            // Validate the Legendre condition on a probe grid up front; the
            // wrapped evaluator then transforms unconditionally.
            let probe = 1024;
            for i in 0..probe {
                let t = (i as f64 + 0.5) / probe as f64;
                let c = f(t);
                let neg_h = c.h.scale(-1.0);
                matfun::sym_inv_sqrt(&neg_h).map_err(|_| {
                    Error::LegendreCondition(format!(
                        "H not negative-definite near t={t:.4}: Legendre condition"
                    ))
                })?;
            }
            let inner = f.clone();
            let eval = move |t: f64| -> Coeffs {
                let c = inner(t);
                let neg_h = c.h.scale(-1.0);
                let p_inv = matfun::sym_inv_sqrt(&neg_h)
                    .expect("Legendre condition validated on probe grid");
                Coeffs {
                    h: Matrix::identity(neg_h.rows()).scale(-1.0),
                    y: c.y.matmul(&p_inv),
                    x: c.x.matmul(&p_inv),
                }
            };
            Ok(Problem {
                path: CoefficientPath::closed(p.path.d, m, eval),
                normalized: true,
                label: p.label.clone(),
            })
        }
    }
}

/// Harmonic-oscillator family: d = m = 1, `H = -1`, `Y_t = t r`, `X_t = 1`.
pub fn build_oscillator(r: f64) -> Problem {
    let eval = move |t: f64| Coeffs {
        h: Matrix::scalar(-1.0),
        y: Matrix::scalar(t * r),
        x: Matrix::scalar(1.0),
    };
    Problem {
        path: CoefficientPath::closed(1, 1, eval),
        normalized: true,
        label: format!("oscillator(r={r})"),
    }
}

/// Charged particle in a constant magnetic field: d = m = 2, `H = -I`,
/// constant `Y = [[0, r], [-r, 0]]`, `X = I`.
pub fn build_magnetic(r: f64) -> Problem {
    let eval = move |_t: f64| {
        let mut y = Matrix::zeros(2, 2);
        y[(0, 1)] = r;
        y[(1, 0)] = -r;
        Coeffs {
            h: Matrix::identity(2).scale(-1.0),
            y,
            x: Matrix::identity(2),
        }
    };
    Problem {
        path: CoefficientPath::closed(2, 2, eval),
        normalized: true,
        label: format!("magnetic(r={r})"),
    }
}

/// Linear time-invariant family `dq/dt = Aq + u` with cost density
/// `(|u|^2 - <q, Rq>)/2`, for symmetric `A` and `R` of equal size.
///
/// In the flow coordinates the coefficients are
/// `X_t = e^{-tA}` and `Y_t = (int_0^t e^{sA} R e^{sA} ds) e^{-tA}`,
/// both evaluated exactly through one eigendecomposition of `A`.
pub fn build_lti(a: &Matrix, r: &Matrix) -> Result<Problem> {
    a.check_symmetric(1e-10, "build_lti: A")?;
    r.check_symmetric(1e-10, "build_lti: R")?;
    let m = a.rows();
    if r.rows() != m {
        return Err(Error::Dimension(format!(
            "build_lti: A is {m}x{m} but R is {}x{}",
            r.rows(),
            r.cols()
        )));
    }
    let eig = matfun::sym_eigen(a)?;
    let evals = eig.values.clone();
    let v = eig.vectors.clone();
    let r_tilde = v.tr_matmul(&r.matmul(&v)); // V^T R V

    // phi(c, t) = (e^{ct} - 1)/c, the integral of e^{cs} over [0, t]
    let phi = |c: f64, t: f64| -> f64 {
        if (c * t).abs() < 1e-8 {
            t * (1.0 + c * t / 2.0 + c * c * t * t / 6.0)
        } else {
            ((c * t).exp() - 1.0) / c
        }
    };

    let label = format!("lti(m={m})");
    let eval = move |t: f64| {
        let n = evals.len();
        // e^{-tA} = V e^{-tD} V^T
        let exp_neg = {
            let mut w = Matrix::zeros(n, n);
            for k in 0..n {
                let ek = (-t * evals[k]).exp();
                for i in 0..n {
                    let vik = v[(i, k)] * ek;
                    for j in 0..n {
                        w[(i, j)] += vik * v[(j, k)];
                    }
                }
            }
            w
        };
        // Ybar_t = int_0^t e^{sA} R e^{sA} ds, entrywise in the eigenbasis
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = r_tilde[(i, j)] * phi(evals[i] + evals[j], t);
            }
        }
        let ybar = v.matmul(&w.matmul_tr(&v));
        Coeffs {
            h: Matrix::identity(n).scale(-1.0),
            y: ybar.matmul(&exp_neg),
            x: exp_neg,
        }
    };
    Ok(Problem {
        path: CoefficientPath::closed(m, m, eval),
        normalized: true,
        label,
    })
}

/// `Z_t^T J Z_t = X_t^T Y_t - Y_t^T X_t`, the antisymmetric matrix whose
/// conjugate eigenvalue pairs define the capacity density.
pub fn z_j_z(c: &Coeffs) -> Matrix {
    let xty = c.x.tr_matmul(&c.y);
    let ytx = c.y.tr_matmul(&c.x);
    xty.sub(&ytx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn oscillator_values() {
        let p = build_oscillator(1.0);
        let c = p.path.eval(0.5);
        assert_close(c.h[(0, 0)], -1.0, 0.0);
        assert_close(c.y[(0, 0)], 0.5, 0.0);
        assert_close(c.x[(0, 0)], 1.0, 0.0);

        let p = build_oscillator(0.0);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(p.path.eval(t).y[(0, 0)], 0.0);
        }

        let p = build_oscillator(-1.0);
        assert_close(p.path.eval(1.0).y[(0, 0)], -1.0, 0.0);
    }

    #[test]
    fn magnetic_values_and_phase_pairing() {
        let p = build_magnetic(1.0);
        for t in [0.1, 0.9] {
            let c = p.path.eval(t);
            assert_close(c.y[(0, 1)], 1.0, 0.0);
            assert_close(c.y[(1, 0)], -1.0, 0.0);
            assert_close(c.x[(0, 0)], 1.0, 0.0);
        }
        let p0 = build_magnetic(0.0);
        assert_eq!(p0.path.eval(0.5).y.frobenius_norm(), 0.0);

        // Z^T J Z = [[0, 2r], [-2r, 0]], expanded by hand from the
        // symplectic pairing of (Yv, Xv) blocks.
        for r in [0.5, 1.0, 2.0] {
            let c = build_magnetic(r).path.eval(0.4);
            let zjz = z_j_z(&c);
            assert_close(zjz[(0, 1)], 2.0 * r, 1e-14);
            assert_close(zjz[(1, 0)], -2.0 * r, 1e-14);
            assert_close(zjz[(0, 0)], 0.0, 0.0);
        }
    }

    #[test]
    fn lti_reduces_to_oscillator_when_a_is_zero() {
        let p = build_lti(&Matrix::scalar(0.0), &Matrix::scalar(1.5)).unwrap();
        let q = build_oscillator(1.5);
        for i in 0..64 {
            let t = (i as f64 + 0.5) / 64.0;
            let a = p.path.eval(t);
            let b = q.path.eval(t);
            assert_close(a.y[(0, 0)], b.y[(0, 0)], 1e-12);
            assert_close(a.x[(0, 0)], b.x[(0, 0)], 1e-12);
        }
    }

    #[test]
    fn lti_with_zero_cost_matrix() {
        let a = 0.7;
        let p = build_lti(&Matrix::scalar(a), &Matrix::scalar(0.0)).unwrap();
        let c = p.path.eval(0.6);
        assert_eq!(c.y[(0, 0)], 0.0);
        assert_close(c.x[(0, 0)], (-0.6 * a).exp(), 1e-14);
    }

    #[test]
    fn lti_scalar_coefficient_value() {
        // Y_1 for A = R = (1): e^{-1} * int_0^1 e^{2s} ds = sinh(1).
        // Oracle: composite midpoint quadrature of e^{s}*1*e^{s-1}.
        let nq = 20000;
        let mut acc = 0.0;
        for i in 0..nq {
            let s = (i as f64 + 0.5) / nq as f64;
            acc += (s).exp() * (s - 1.0).exp() / nq as f64;
        }
        let p = build_lti(&Matrix::scalar(1.0), &Matrix::scalar(1.0)).unwrap();
        let y1 = p.path.eval(1.0).y[(0, 0)];
        assert_close(y1, acc, 1e-7);
        assert_close(y1, 1.0_f64.sinh(), 1e-13);
    }

    #[test]
    fn lti_rejects_bad_input() {
        let asym = Matrix::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(build_lti(&asym, &Matrix::identity(2)).is_err());
        assert!(build_lti(&Matrix::identity(2), &Matrix::identity(3)).is_err());
    }

    fn sampled_scalar(h_vals: &[f64], y_vals: &[f64], x_vals: &[f64]) -> Problem {
        let to_mats = |v: &[f64]| v.iter().map(|&x| Matrix::scalar(x)).collect::<Vec<_>>();
        Problem {
            path: CoefficientPath::sampled(
                1,
                1,
                to_mats(h_vals),
                to_mats(y_vals),
                to_mats(x_vals),
                DEFAULT_LEGENDRE_MARGIN,
            )
            .unwrap(),
            normalized: false,
            label: "sampled-test".into(),
        }
    }

    #[test]
    fn normalize_scalar_scaling() {
        // H = -4, X = 1 becomes H = -1, X = 1/2
        let p = sampled_scalar(&[-4.0; 8], &[0.0; 8], &[1.0; 8]);
        let n = normalize(&p).unwrap();
        assert!(n.normalized);
        let c = n.path.eval(0.5);
        assert_close(c.h[(0, 0)], -1.0, 0.0);
        assert_close(c.x[(0, 0)], 0.5, 1e-14);
    }

    #[test]
    fn normalize_fixed_point_and_idempotency() {
        let p = build_oscillator(2.0);
        let n = normalize(&p).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let a = p.path.eval(t);
            let b = n.path.eval(t);
            assert_eq!(a.y[(0, 0)], b.y[(0, 0)]);
            assert_eq!(a.x[(0, 0)], b.x[(0, 0)]);
        }
        // idempotent on a sampled path: second normalize is the identity
        let p = sampled_scalar(&[-2.0, -3.0, -2.5, -2.0], &[0.1, 0.2, 0.3, 0.4], &[1.0; 4]);
        let n1 = normalize(&p).unwrap();
        let n2 = normalize(&n1).unwrap();
        for t in [0.0, 0.33, 0.7, 1.0] {
            assert_eq!(n1.path.eval(t).y[(0, 0)], n2.path.eval(t).y[(0, 0)]);
            assert_eq!(n1.path.eval(t).x[(0, 0)], n2.path.eval(t).x[(0, 0)]);
        }
    }

    #[test]
    fn normalize_rejects_indefinite_h() {
        let bad = CoefficientPath::sampled(
            1,
            1,
            vec![Matrix::scalar(0.5)],
            vec![Matrix::scalar(0.0)],
            vec![Matrix::scalar(1.0)],
            DEFAULT_LEGENDRE_MARGIN,
        );
        assert!(matches!(bad, Err(Error::LegendreCondition(_))));
    }

    #[test]
    fn sampled_validation_errors() {
        // nt = 0
        assert!(CoefficientPath::sampled(1, 1, vec![], vec![], vec![], 1e-8).is_err());
        // H asymmetric
        let h = Matrix::new(2, 2, vec![-1.0, 0.5, 0.0, -1.0]).unwrap();
        let y = Matrix::zeros(1, 2);
        let x = Matrix::zeros(1, 2);
        assert!(matches!(
            CoefficientPath::sampled(1, 2, vec![h], vec![y], vec![x], 1e-8),
            Err(Error::NotSymmetric(_))
        ));
        // Y wrong shape
        let h = Matrix::identity(1).scale(-1.0);
        let y = Matrix::zeros(2, 2);
        let x = Matrix::zeros(1, 1);
        assert!(CoefficientPath::sampled(1, 1, vec![h], vec![y], vec![x], 1e-8).is_err());
    }

    #[test]
    fn sampled_interpolation_clamps_at_ends() {
        let p = sampled_scalar(&[-1.0; 4], &[1.0, 2.0, 3.0, 4.0], &[1.0; 4]);
        // midpoints at 1/8, 3/8, 5/8, 7/8
        assert_close(p.path.eval(0.0).y[(0, 0)], 1.0, 0.0);
        assert_close(p.path.eval(1.0).y[(0, 0)], 4.0, 0.0);
        assert_close(p.path.eval(0.25).y[(0, 0)], 1.5, 1e-14);
        assert_close(p.path.eval(3.0 / 8.0).y[(0, 0)], 2.0, 1e-14);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn normalize_is_idempotent_on_sampled_scalars(
                hs in proptest::collection::vec(-5.0_f64..-0.1, 3..10),
                seed in 0_u64..1000,
            ) {
                let nt = hs.len();
                let ys: Vec<f64> = (0..nt).map(|i| ((i as f64) + seed as f64).sin()).collect();
                let p = sampled_scalar(&hs, &ys, &vec![1.0; nt]);
                let n1 = normalize(&p).unwrap();
                let n2 = normalize(&n1).unwrap();
                for i in 0..nt {
                    let t = (i as f64 + 0.5) / nt as f64;
                    prop_assert_eq!(n1.path.eval(t).y[(0, 0)], n2.path.eval(t).y[(0, 0)]);
                }
            }
        }
    }
}
