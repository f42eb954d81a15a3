//! The parametrized Jacobi flow and the determinant/trace identities.
//!
//! The linear Hamiltonian system integrated here propagates
//! `eta' = Z_t^s (Z_t^s)^T J eta` on phase space `R^d x R^d` with
//! `Z_t^s v = (s Y_t v, X_t v)` and `J = [[0, -I], [I, 0]]` in `(p, q)`
//! block coordinates. Reading the lower-left block of the fundamental
//! matrix gives the endpoint map `Q_1^s`; its determinant is an entire
//! function of `s` whose zeros are the reciprocals of the operator
//! eigenvalues (with a sign), and whose values at `s = 0, 1` give the Gramm
//! determinant and the regularized determinant of `I + K`.
//!
//! All entry points accept any problem and normalize it first (flag-guarded,
//! so normalized inputs pass through untouched).

use crate::error::{Error, Result};
use crate::matfun::{self, Matrix};
use crate::model::{self, Coeffs, Problem};

/// Fundamental solution of the parametrized Jacobi flow at some time.
#[derive(Debug, Clone)]
pub struct FlowState {
    /// 2d-by-2d fundamental matrix.
    pub phi: Matrix,
    pub t: f64,
    pub s: f64,
}

/// Determinant/trace summary computed from one flow integration.
#[derive(Debug, Clone)]
pub struct JacobiReport {
    pub q1s: Matrix,
    pub gamma1: Matrix,
    pub det_i_plus_k: f64,
    pub tr_k: f64,
    pub s: f64,
}

/// One located zero of the characteristic function.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Root {
    /// Parameter value with `det Q_1^s = 0`.
    pub s: f64,
    /// Recovered operator eigenvalue `alpha = -1/s`.
    pub eigenvalue: f64,
    /// Kernel dimension of `Q_1^s` at the root.
    pub multiplicity: usize,
}

/// Result of a characteristic-function scan over an `s`-interval.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RootScan {
    pub roots: Vec<Root>,
    /// Set when a root sits in the first or last grid cell, suggesting the
    /// interval cuts the spectrum off.
    pub widen_advisory: bool,
}

/// Coefficient weights for the right-hand side
/// `[[cyy Y Y^T, cyx Y X^T], [cyx X Y^T, cxx X X^T]] J`.
///
/// `(s^2, s, 1)` gives the parametrized flow; `(s, s, s)` gives the
/// s-scaled plain flow used by the derivative-pairing diagnostic.
#[derive(Clone, Copy)]
struct RhsWeights {
    cyy: f64,
    cyx: f64,
    cxx: f64,
}

/// `out = [[cyy Y Y^T, cyx Y X^T],[cyx X Y^T, cxx X X^T]] J phi`, computed
/// as `Zw (Zw^T (J phi))` block-wise without forming the 2d-by-2d matrix.
fn apply_rhs(c: &Coeffs, w: RhsWeights, phi: &Matrix, out: &mut Matrix) {
    let d = c.y.rows();
    let m = c.y.cols();
    let n = 2 * d;
    let cols = phi.cols();
    debug_assert_eq!(phi.rows(), n);

    // T = [w1 Y^T, w2 X^T] * (J phi) where (J phi)_top = -phi_q, bottom = phi_p.
    // Split the weights so that T covers both the p- and q-block factors:
    //   out_p = Y * (cyy Y^T (Jphi)_p + cyx X^T (Jphi)_q)... expanded directly:
    //   out_p = cyy Y Y^T (Jphi)_p + cyx Y X^T (Jphi)_q
    //   out_q = cyx X Y^T (Jphi)_p + cxx X X^T (Jphi)_q
    // with (Jphi)_p = -phi_q, (Jphi)_q = phi_p.
    let mut t1 = Matrix::zeros(m, cols); // Y^T (Jphi)_p = -Y^T phi_q
    let mut t2 = Matrix::zeros(m, cols); // X^T (Jphi)_q =  X^T phi_p
    for k in 0..d {
        let phi_q_row = phi.row(d + k);
        let phi_p_row = phi.row(k);
        for a in 0..m {
            let ya = c.y[(k, a)];
            let xa = c.x[(k, a)];
            let t1_row = &mut t1.data_mut()[a * cols..(a + 1) * cols];
            for (o, &v) in t1_row.iter_mut().zip(phi_q_row) {
                *o -= ya * v;
            }
            let t2_row = &mut t2.data_mut()[a * cols..(a + 1) * cols];
            for (o, &v) in t2_row.iter_mut().zip(phi_p_row) {
                *o += xa * v;
            }
        }
    }
    for x in out.data_mut() {
        *x = 0.0;
    }
    for i in 0..d {
        for a in 0..m {
            let yf = c.y[(i, a)];
            let xf = c.x[(i, a)];
            let t1_row = &t1.row(a).to_vec();
            let t2_row = &t2.row(a).to_vec();
            {
                let out_p = &mut out.data_mut()[i * cols..(i + 1) * cols];
                for (o, (&u, &v)) in out_p.iter_mut().zip(t1_row.iter().zip(t2_row.iter())) {
                    *o += yf * (w.cyy * u + w.cyx * v);
                }
            }
            {
                let out_q = &mut out.data_mut()[(d + i) * cols..(d + i + 1) * cols];
                for (o, (&u, &v)) in out_q.iter_mut().zip(t1_row.iter().zip(t2_row.iter())) {
                    *o += xf * (w.cyx * u + w.cxx * v);
                }
            }
        }
    }
}

/// Classical fixed-step RK4 for the fundamental matrix; optionally records
/// the solution at every node (`steps + 1` matrices including both ends).
fn integrate(
    p: &Problem,
    weights: RhsWeights,
    steps: usize,
    record: bool,
) -> Result<(Matrix, Option<Vec<Matrix>>)> {
    if steps < 16 || steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "steps must be even and at least 16, got {steps}"
        )));
    }
    let d = p.state_dim();
    let n = 2 * d;
    let h = 1.0 / steps as f64;
    let mut phi = Matrix::identity(n);
    let mut trace = record.then(|| {
        let mut v = Vec::with_capacity(steps + 1);
        v.push(phi.clone());
        v
    });

    let mut k1 = Matrix::zeros(n, n);
    let mut k2 = Matrix::zeros(n, n);
    let mut k3 = Matrix::zeros(n, n);
    let mut k4 = Matrix::zeros(n, n);
    let mut tmp = Matrix::zeros(n, n);

    let mut c_t = p.path.eval(0.0);
    for step in 0..steps {
        let t = step as f64 * h;
        let c_mid = p.path.eval(t + 0.5 * h);
        let c_end = p.path.eval(t + h);

        apply_rhs(&c_t, weights, &phi, &mut k1);

        for (o, (&a, &b)) in tmp
            .data_mut()
            .iter_mut()
            .zip(phi.data().iter().zip(k1.data()))
        {
            *o = a + 0.5 * h * b;
        }
        apply_rhs(&c_mid, weights, &tmp, &mut k2);

        for (o, (&a, &b)) in tmp
            .data_mut()
            .iter_mut()
            .zip(phi.data().iter().zip(k2.data()))
        {
            *o = a + 0.5 * h * b;
        }
        apply_rhs(&c_mid, weights, &tmp, &mut k3);

        for (o, (&a, &b)) in tmp
            .data_mut()
            .iter_mut()
            .zip(phi.data().iter().zip(k3.data()))
        {
            *o = a + h * b;
        }
        apply_rhs(&c_end, weights, &tmp, &mut k4);

        let ph = phi.data_mut();
        for (i, x) in ph.iter_mut().enumerate() {
            *x += h / 6.0
                * (k1.data()[i] + 2.0 * k2.data()[i] + 2.0 * k3.data()[i] + k4.data()[i]);
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(phi.clone());
        }
        c_t = c_end;
    }
    Ok((phi, trace))
}

/// The Gramm matrix by composite midpoint quadrature of `X_t X_t^T`.
///
/// Errors with a non-regular-point diagnosis when the result is singular
/// (smallest eigenvalue below `1e-10` of the largest).
pub fn gram(p: &Problem, nq: usize) -> Result<Matrix> {
    let p = model::normalize(p)?;
    if nq == 0 {
        return Err(Error::InvalidArgument("gram: nq must be positive".into()));
    }
    let d = p.state_dim();
    let dt = 1.0 / nq as f64;
    let mut g = Matrix::zeros(d, d);
    for i in 0..nq {
        let t = (i as f64 + 0.5) * dt;
        let c = p.path.eval(t);
        let xxt = c.x.matmul_tr(&c.x);
        for (o, &v) in g.data_mut().iter_mut().zip(xxt.data()) {
            *o += dt * v;
        }
    }
    let eig = matfun::sym_eigen(&g)?;
    let max = eig.values.last().copied().unwrap_or(0.0);
    let min = eig.values.first().copied().unwrap_or(0.0);
    if min < 1e-10 * max {
        return Err(Error::NonRegularPoint(format!(
            "Gramm matrix singular: eigenvalue range [{min:.3e}, {max:.3e}]"
        )));
    }
    Ok(g)
}

/// Fundamental matrix of the parametrized Jacobi flow at `t = 1`.
pub fn flow(p: &Problem, s: f64, steps: usize) -> Result<FlowState> {
    let p = model::normalize(p)?;
    let (phi, _) = integrate(
        &p,
        RhsWeights {
            cyy: s * s,
            cyx: s,
            cxx: 1.0,
        },
        steps,
        false,
    )?;
    Ok(FlowState { phi, t: 1.0, s })
}

/// Endpoint map `Q_1^s`: the image of `(p_0, 0)` initial data read off the
/// q-rows of the propagated columns (lower-left d-by-d block).
pub fn extract_q(fs: &FlowState) -> Matrix {
    let n = fs.phi.rows();
    let d = n / 2;
    Matrix::from_fn(d, d, |i, j| fs.phi[(d + i, j)])
}

/// Symplectic form drift `||Phi^T J Phi - J||_F`, a correctness monitor for
/// the integrator.
pub fn symplectic_defect(fs: &FlowState) -> f64 {
    let n = fs.phi.rows();
    let d = n / 2;
    // J phi: top = -phi_q, bottom = phi_p
    let mut jphi = Matrix::zeros(n, n);
    for i in 0..d {
        for j in 0..n {
            jphi[(i, j)] = -fs.phi[(d + i, j)];
            jphi[(d + i, j)] = fs.phi[(i, j)];
        }
    }
    let mut ptjp = fs.phi.tr_matmul(&jphi);
    for i in 0..d {
        ptjp[(i, d + i)] += 1.0;
        ptjp[(d + i, i)] -= 1.0;
    }
    ptjp.frobenius_norm()
}

/// Regularized determinant `det(I + K) = det(Q_1 Gamma_1^{-1})`.
///
/// A plain real number: negative or zero values are meaningful (zero marks a
/// conjugate point at `t = 1`, equivalently eigenvalue `-1`).
pub fn det_identity(p: &Problem, steps: usize) -> Result<f64> {
    let p = model::normalize(p)?;
    let q = extract_q(&flow(&p, 1.0, steps)?);
    let g = gram(&p, steps)?;
    let det_g = matfun::lu_det(&g)?;
    Ok(matfun::lu_det(&q)? / det_g)
}

/// Regularized trace by the single-pass cumulative scheme.
///
/// Each cell contributes a strip term (midpoint value against the integral
/// accumulated before the cell) plus the causal self-cell triangle evaluated
/// at the triangle centroid; the centroid rule keeps the scheme exact for
/// coefficient paths that are linear in `t`.
pub fn trace_identity(p: &Problem, nt: usize) -> Result<f64> {
    let p = model::normalize(p)?;
    if nt == 0 {
        return Err(Error::InvalidArgument(
            "trace_identity: nt must be positive".into(),
        ));
    }
    let d = p.state_dim();
    let g = gram(&p, nt)?;
    let dt = 1.0 / nt as f64;

    // tr(X Z^T J W G^{-1}) assembled as tr(G^{-1} X Z^T J W); solve once per
    // cell on the d-by-d product.
    let mut w_p = Matrix::zeros(d, d); // Y-block of W = int Z X^T
    let mut w_q = Matrix::zeros(d, d); // X-block
    let mut acc = 0.0;

    let term = |c_out: &Coeffs, c_in_p: &Matrix, c_in_q: &Matrix, g: &Matrix| -> Result<f64> {
        // Z_out^T J W = -Y_out^T W_q + X_out^T W_p  (m x d)
        let zjw = c_out
            .x
            .tr_matmul(c_in_p)
            .sub(&c_out.y.tr_matmul(c_in_q));
        let m_mat = c_out.x.matmul(&zjw); // d x d
        let solved = matfun::solve(g, &m_mat)?;
        Ok(solved.trace())
    };

    for i in 0..nt {
        let t0 = i as f64 * dt;
        let c_mid = p.path.eval(t0 + 0.5 * dt);

        // strip: everything accumulated before this cell
        acc += dt * term(&c_mid, &w_p, &w_q, &g)?;

        // self-cell triangle at the centroid (outer 2/3, inner 1/3)
        let c_out = p.path.eval(t0 + 2.0 * dt / 3.0);
        let c_in = p.path.eval(t0 + dt / 3.0);
        let zin_p = c_in.y.matmul_tr(&c_in.x); // Y_in X_in^T
        let zin_q = c_in.x.matmul_tr(&c_in.x); // X_in X_in^T
        acc += 0.5 * dt * dt * term(&c_out, &zin_p, &zin_q, &g)?;

        // advance W by the full cell
        let dy = c_mid.y.matmul_tr(&c_mid.x);
        let dx = c_mid.x.matmul_tr(&c_mid.x);
        for (o, &v) in w_p.data_mut().iter_mut().zip(dy.data()) {
            *o += dt * v;
        }
        for (o, &v) in w_q.data_mut().iter_mut().zip(dx.data()) {
            *o += dt * v;
        }
    }
    Ok(acc)
}

/// Characteristic function `s -> det Q_1^s`.
pub fn char_fn(p: &Problem, s: f64, steps: usize) -> Result<f64> {
    matfun::lu_det(&extract_q(&flow(p, s, steps)?))
}

/// Summary report at `s = 1`: endpoint map, Gramm matrix, determinant and
/// trace identities.
pub fn report(p: &Problem, steps: usize) -> Result<JacobiReport> {
    let p = model::normalize(p)?;
    let q1s = extract_q(&flow(&p, 1.0, steps)?);
    let gamma1 = gram(&p, steps)?;
    let det = matfun::lu_det(&q1s)? / matfun::lu_det(&gamma1)?;
    let tr = trace_identity(&p, steps)?;
    Ok(JacobiReport {
        q1s,
        gamma1,
        det_i_plus_k: det,
        tr_k: tr,
        s: 1.0,
    })
}

/// Smallest singular value and Frobenius norm of `Q_1^s`.
fn q_sigma(p: &Problem, s: f64, steps: usize) -> Result<(f64, f64, Matrix)> {
    let q = extract_q(&flow(p, s, steps)?);
    let sv = matfun::singular_values(&q)?;
    let smin = sv.last().copied().unwrap_or(0.0);
    let norm = q.frobenius_norm();
    Ok((smin, norm, q))
}

/// Locate eigenvalues of the operator as zeros of the characteristic
/// function on `[s_lo, s_hi]`.
///
/// Odd-multiplicity roots are bracketed by sign changes of `det Q_1^s` on
/// the grid and bisected to width `1e-10`. Even-multiplicity roots do not
/// change the sign; they show up as interior local minima of `|det Q_1^s|`
/// and are refined by ternary search on the smallest singular value of
/// `Q_1^s`. Multiplicities are kernel dimensions estimated from singular
/// values below `1e-6` of the problem scale.
pub fn spectrum_via_roots(
    p: &Problem,
    s_lo: f64,
    s_hi: f64,
    steps: usize,
    grid: usize,
) -> Result<RootScan> {
    if !(s_lo < s_hi) {
        return Err(Error::InvalidArgument(format!(
            "root scan needs s_lo < s_hi, got [{s_lo}, {s_hi}]"
        )));
    }
    if grid < 8 {
        return Err(Error::InvalidArgument(
            "root scan grid must have at least 8 points".into(),
        ));
    }
    let p = model::normalize(p)?;

    // split around zero: alpha = -1/s is undefined there and the spectrum
    // of a compact operator leaves a neighborhood of s = 0 root-free
    if s_lo < 0.0 && s_hi > 0.0 {
        let delta = (s_hi - s_lo) / grid as f64;
        let left_frac = ((-delta - s_lo) / (s_hi - s_lo)).max(0.0);
        let g_left = ((grid as f64 * left_frac).round() as usize).max(8);
        let mut scan = if s_lo < -delta {
            spectrum_via_roots(&p, s_lo, -delta, steps, g_left)?
        } else {
            RootScan {
                roots: vec![],
                widen_advisory: false,
            }
        };
        let right = if delta < s_hi {
            spectrum_via_roots(&p, delta, s_hi, steps, grid.saturating_sub(g_left).max(8))?
        } else {
            RootScan {
                roots: vec![],
                widen_advisory: false,
            }
        };
        scan.roots.extend(right.roots);
        scan.widen_advisory |= right.widen_advisory;
        scan.roots
            .sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
        return Ok(scan);
    }

    let n = grid;
    let hs = (s_hi - s_lo) / n as f64;
    let mut vals = Vec::with_capacity(n + 1);
    let mut qnorms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s = s_lo + k as f64 * hs;
        let q = extract_q(&flow(&p, s, steps)?);
        qnorms.push(q.frobenius_norm());
        vals.push(matfun::lu_det(&q)?);
    }
    let mut sorted_norms = qnorms.clone();
    sorted_norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale_q = sorted_norms[sorted_norms.len() / 2].max(1e-300);
    let sv_tol = 1e-6 * scale_q;

    let mut roots: Vec<Root> = Vec::new();
    let mut widen = false;

    let mut push_root = |s_root: f64, q: &Matrix, roots: &mut Vec<Root>| -> Result<()> {
        if let Some(last) = roots.last() {
            if (s_root - last.s).abs() < 1e-8 * s_root.abs().max(1.0) {
                return Ok(());
            }
        }
        let sv = matfun::singular_values(q)?;
        let mult = sv
            .iter()
            .filter(|&&x| x < sv_tol.max(1e-6 * q.frobenius_norm()))
            .count()
            .max(1);
        roots.push(Root {
            s: s_root,
            eigenvalue: -1.0 / s_root,
            multiplicity: mult,
        });
        Ok(())
    };

    for k in 0..n {
        let a = s_lo + k as f64 * hs;
        let b = a + hs;
        let fa = vals[k];
        let fb = vals[k + 1];
        if fa == 0.0 {
            // exact grid hit
            let (_, _, q) = q_sigma(&p, a, steps)?;
            push_root(a, &q, &mut roots)?;
            continue;
        }
        if fa * fb < 0.0 {
            // bisection to 1e-10
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let fm = char_fn(&p, mid, steps)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            let s_root = 0.5 * (lo + hi);
            let (_, _, q) = q_sigma(&p, s_root, steps)?;
            push_root(s_root, &q, &mut roots)?;
            if k == 0 || k == n - 1 {
                widen = true;
            }
            continue;
        }
        // interior local minimum of |det| without a sign change: candidate
        // even-multiplicity root (a touch-zero leaves no sign change)
        if k > 0 && k + 1 < n {
            let prev = vals[k - 1].abs();
            let here = vals[k].abs();
            let next = vals[k + 1].abs();
            let char_scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if here < prev && here <= next && here < 0.1 * char_scale {
                // ternary search on the smallest singular value; a genuine
                // root drives it to zero, a shallow dip does not
                let (mut lo, mut hi) = (a - hs, a + hs);
                for _ in 0..90 {
                    if hi - lo < 1e-11 {
                        break;
                    }
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    let (f1, _, _) = q_sigma(&p, m1, steps)?;
                    let (f2, _, _) = q_sigma(&p, m2, steps)?;
                    if f1 < f2 {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let s_root = 0.5 * (lo + hi);
                let (smin_final, _, q) = q_sigma(&p, s_root, steps)?;
                if smin_final < sv_tol {
                    push_root(s_root, &q, &mut roots)?;
                    if k <= 1 || k + 2 >= n {
                        widen = true;
                    }
                }
            }
        }
    }

    // roots hugging the scan boundary suggest more spectrum outside
    if vals[0].abs() < 1e-8 * scale_q || vals[n].abs() < 1e-8 * scale_q {
        widen = true;
    }
    Ok(RootScan {
        roots,
        widen_advisory: widen,
    })
}

/// Diagnostic for the derivative-pairing identity of the s-scaled flow:
/// the symplectic pairing of the endpoint with its s-derivative must equal
/// the accumulated energy `int |Z^T J eta|^2 dt` along the trajectory.
///
/// Returns the worst absolute discrepancy over the basis of initial
/// conditions `(e_i, 0)`, with the s-derivative taken by central finite
/// difference of width `h`.
pub fn pairing_defect(p: &Problem, s: f64, steps: usize, h: f64) -> Result<f64> {
    let p = model::normalize(p)?;
    let d = p.state_dim();
    let scaled = |sv: f64| RhsWeights {
        cyy: sv,
        cyx: sv,
        cxx: sv,
    };
    let (phi, trace) = integrate(&p, scaled(s), steps, true)?;
    let trace = trace.expect("trace recording requested");
    let (phi_plus, _) = integrate(&p, scaled(s + h), steps, false)?;
    let (phi_minus, _) = integrate(&p, scaled(s - h), steps, false)?;

    let ht = 1.0 / steps as f64;
    // Simpson weights over the recorded nodes (steps is even)
    let mut worst: f64 = 0.0;
    for col in 0..d {
        // eta(1) and d/ds eta(1) for initial data (e_col, 0)
        let eta1: Vec<f64> = (0..2 * d).map(|i| phi[(i, col)]).collect();
        let deta1: Vec<f64> = (0..2 * d)
            .map(|i| (phi_plus[(i, col)] - phi_minus[(i, col)]) / (2.0 * h))
            .collect();
        // <J eta, deta> = sum_i (-eta_q[i] deta_p[i] + eta_p[i] deta_q[i])
        let mut lhs = 0.0;
        for i in 0..d {
            lhs += -eta1[d + i] * deta1[i] + eta1[i] * deta1[d + i];
        }

        let mut rhs = 0.0;
        for (node, phi_t) in trace.iter().enumerate() {
            let t = node as f64 * ht;
            let c = p.path.eval(t);
            let m = c.y.cols();
            // Z^T J eta = -Y^T eta_q + X^T eta_p
            let mut val = 0.0;
            for a in 0..m {
                let mut comp = 0.0;
                for i in 0..d {
                    comp += -c.y[(i, a)] * phi_t[(d + i, col)] + c.x[(i, a)] * phi_t[(i, col)];
                }
                val += comp * comp;
            }
            let weight = if node == 0 || node == steps {
                1.0
            } else if node % 2 == 1 {
                4.0
            } else {
                2.0
            };
            rhs += weight * val;
        }
        rhs *= ht / 3.0;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Endpoint pairing `<J eta(1), d_s eta(1)>` for each basis column; the
/// identity makes these non-negative, which the property suite checks.
pub fn pairing_values(p: &Problem, s: f64, steps: usize, h: f64) -> Result<Vec<f64>> {
    let p = model::normalize(p)?;
    let d = p.state_dim();
    let scaled = |sv: f64| RhsWeights {
        cyy: sv,
        cyx: sv,
        cxx: sv,
    };
    let (phi, _) = integrate(&p, scaled(s), steps, false)?;
    let (phi_plus, _) = integrate(&p, scaled(s + h), steps, false)?;
    let (phi_minus, _) = integrate(&p, scaled(s - h), steps, false)?;
    let mut out = Vec::with_capacity(d);
    for col in 0..d {
        let mut lhs = 0.0;
        for i in 0..d {
            let eta_p = phi[(i, col)];
            let eta_q = phi[(d + i, col)];
            let deta_p = (phi_plus[(i, col)] - phi_minus[(i, col)]) / (2.0 * h);
            let deta_q = (phi_plus[(d + i, col)] - phi_minus[(d + i, col)]) / (2.0 * h);
            lhs += -eta_q * deta_p + eta_p * deta_q;
        }
        out.push(lhs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lti, build_magnetic, build_oscillator};
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn gram_closed_forms() {
        // oscillator: X = 1 so Gamma_1 = 1
        let g = gram(&build_oscillator(3.0), 512).unwrap();
        assert_close(g[(0, 0)], 1.0, 1e-14);
        // magnetic: X = I so Gamma_1 = I
        let g = gram(&build_magnetic(1.0), 512).unwrap();
        assert!(g.sub(&Matrix::identity(2)).frobenius_norm() < 1e-13);
        // LTI A = (1): Gamma_1 = (1 - e^{-2})/2
        let p = build_lti(&Matrix::scalar(1.0), &Matrix::scalar(0.0)).unwrap();
        let g = gram(&p, 4096).unwrap();
        assert_close(g[(0, 0)], (1.0 - (-2.0_f64).exp()) / 2.0, 1e-8);
    }

    #[test]
    fn flow_at_s_zero_reproduces_gram() {
        let p = build_oscillator(1.0);
        let q0 = extract_q(&flow(&p, 0.0, 1024).unwrap());
        assert_close(q0[(0, 0)], 1.0, 1e-12);

        let p = build_magnetic(1.0);
        let q0 = extract_q(&flow(&p, 0.0, 1024).unwrap());
        let g = gram(&p, 1024).unwrap();
        assert!(q0.sub(&g).frobenius_norm() < 1e-10);
    }

    #[test]
    fn flow_is_s_independent_when_y_vanishes() {
        let p = build_lti(&Matrix::scalar(0.8), &Matrix::scalar(0.0)).unwrap();
        let q1 = extract_q(&flow(&p, 0.0, 512).unwrap());
        let q2 = extract_q(&flow(&p, 3.0, 512).unwrap());
        assert_close(q1[(0, 0)], q2[(0, 0)], 1e-12);
        // the flow value is near-exact; the quadrature side is O(nq^-2)
        let g = gram(&p, 512).unwrap();
        assert_close(q1[(0, 0)], g[(0, 0)], 1e-6);
    }

    #[test]
    fn oscillator_endpoint_values() {
        // r = 1, s = 1: sin(1)
        let q = extract_q(&flow(&build_oscillator(1.0), 1.0, 4096).unwrap());
        assert_close(q[(0, 0)], 1.0_f64.sin(), 1e-12);
        // hyperbolic branch r = -1: sinh(1)
        let q = extract_q(&flow(&build_oscillator(-1.0), 1.0, 4096).unwrap());
        assert_close(q[(0, 0)], 1.0_f64.sinh(), 1e-12);
    }

    #[test]
    fn magnetic_endpoint_is_a_rotation_scaled_by_sin() {
        // q(1) is the complex number sin(1) e^{i}: det Q = sin(1)^2 and
        // Q^T Q = sin(1)^2 I
        let q = extract_q(&flow(&build_magnetic(1.0), 1.0, 4096).unwrap());
        let det = matfun::lu_det(&q).unwrap();
        assert_close(det, 1.0_f64.sin().powi(2), 1e-11);
        let qtq = q.tr_matmul(&q);
        let expected = Matrix::identity(2).scale(1.0_f64.sin().powi(2));
        assert!(qtq.sub(&expected).frobenius_norm() < 1e-10);
    }

    #[test]
    fn lti_endpoint_matches_oscillatory_closed_form() {
        // Q_1 = e^{-A} V(1) with V'' = (A^2 - R) V, V(0)=0, V'(0)=I
        let a = Matrix::diag(&[1.0, 2.0]);
        let r = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let p = build_lti(&a, &r).unwrap();
        let q = extract_q(&flow(&p, 1.0, 4096).unwrap());
        let s = a.matmul(&a).sub(&r);
        let osc = matfun::osc_solution(&s, 1.0).unwrap();
        let exp_neg_a = matfun::expm(&a.scale(-1.0)).unwrap();
        let expected = exp_neg_a.matmul(&osc);
        assert!(q.sub(&expected).frobenius_norm() < 1e-11);
    }

    #[test]
    fn det_identity_values() {
        assert_close(
            det_identity(&build_oscillator(1.0), 4096).unwrap(),
            1.0_f64.sin(),
            1e-10,
        );
        assert_close(det_identity(&build_oscillator(0.0), 1024).unwrap(), 1.0, 1e-12);
        assert_close(
            det_identity(&build_magnetic(1.0), 4096).unwrap(),
            1.0_f64.sin().powi(2),
            1e-10,
        );
    }

    #[test]
    fn trace_identity_values() {
        // oscillator: tr K = -r/6
        for r in [1.0, 2.5] {
            let tr = trace_identity(&build_oscillator(r), 4096).unwrap();
            assert_close(tr, -r / 6.0, 1e-12);
        }
        assert_close(trace_identity(&build_oscillator(0.0), 256).unwrap(), 0.0, 1e-15);
        // magnetic: eigenvalues cancel in pairs
        assert_close(trace_identity(&build_magnetic(1.0), 1024).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn char_fn_at_zero_is_det_gram() {
        let p = build_magnetic(0.7);
        let c0 = char_fn(&p, 0.0, 256).unwrap();
        let g = gram(&p, 256).unwrap();
        assert_close(c0, matfun::lu_det(&g).unwrap(), 1e-10);
    }

    #[test]
    fn det_identity_equals_char_ratio() {
        // same integrator on both sides, guards the block extraction
        for p in [build_oscillator(1.3), build_magnetic(0.9)] {
            let det = det_identity(&p, 2048).unwrap();
            let ratio =
                char_fn(&p, 1.0, 2048).unwrap() / char_fn(&p, 0.0, 2048).unwrap();
            assert_close(det, ratio, 1e-10);
        }
    }

    #[test]
    fn rk4_convergence_order_on_the_oscillator() {
        // halving the step shrinks the endpoint error ~16x (order >= 3.8)
        let p = build_oscillator(1.0);
        let exact = 1.0_f64.sin();
        let err = |steps: usize| {
            (extract_q(&flow(&p, 1.0, steps).unwrap())[(0, 0)] - exact).abs()
        };
        let e256 = err(256);
        let e512 = err(512);
        assert!(
            e256 / e512 > 12.0,
            "convergence ratio {} too low (e256={e256:.3e}, e512={e512:.3e})",
            e256 / e512
        );
    }

    #[test]
    fn symplectic_form_is_preserved() {
        let problems = [
            build_oscillator(1.0),
            build_magnetic(1.0),
            build_lti(&Matrix::diag(&[1.0, 2.0]), &Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap()).unwrap(),
        ];
        for p in &problems {
            for s in [-5.0, -2.0, 0.0, 1.0, 3.0, 5.0] {
                let fs = flow(p, s, 4096).unwrap();
                let defect = symplectic_defect(&fs);
                assert!(
                    defect < 1e-9,
                    "{}: symplectic defect {defect:.3e} at s={s}",
                    p.label
                );
            }
        }
    }

    #[test]
    fn oscillator_roots_are_pi_squared_multiples() {
        let p = build_oscillator(1.0);
        let scan = spectrum_via_roots(&p, 1.0, 50.0, 2048, 300).unwrap();
        assert_eq!(scan.roots.len(), 2, "roots: {:?}", scan.roots);
        assert_close(scan.roots[0].s, PI * PI, 1e-6);
        assert_close(scan.roots[1].s, 4.0 * PI * PI, 1e-6);
        assert_eq!(scan.roots[0].multiplicity, 1);
        assert_close(scan.roots[0].eigenvalue, -1.0 / (PI * PI), 1e-8);
    }

    #[test]
    fn zero_operator_has_no_roots() {
        let scan = spectrum_via_roots(&build_oscillator(0.0), 1.0, 50.0, 512, 100).unwrap();
        assert!(scan.roots.is_empty());
    }

    #[test]
    fn magnetic_roots_are_pi_multiples_with_double_kernels() {
        let p = build_magnetic(1.0);
        let scan = spectrum_via_roots(&p, 1.0, 10.0, 2048, 200).unwrap();
        assert_eq!(scan.roots.len(), 3, "roots: {:?}", scan.roots);
        for (k, root) in scan.roots.iter().enumerate() {
            let expect = PI * (k as f64 + 1.0);
            assert_close(root.s, expect, 1e-5);
            assert_eq!(root.multiplicity, 2, "root {root:?}");
        }
    }

    #[test]
    fn scan_interval_containing_zero_is_split() {
        let p = build_oscillator(1.0);
        let scan = spectrum_via_roots(&p, -15.0, 15.0, 1024, 120).unwrap();
        assert_eq!(scan.roots.len(), 1);
        assert_close(scan.roots[0].s, PI * PI, 1e-5);
    }

    #[test]
    fn root_realness_no_false_minima_on_odd_multiplicity_problems() {
        // local minima of |char| below threshold must bracket a sign change
        let p = build_oscillator(1.0);
        let steps = 1024;
        let n = 400;
        let (lo, hi) = (0.5, 50.0);
        let mut vals = Vec::new();
        for k in 0..=n {
            let s = lo + (hi - lo) * k as f64 / n as f64;
            vals.push(char_fn(&p, s, steps).unwrap());
        }
        for k in 1..n {
            let (a, b, c) = (vals[k - 1], vals[k], vals[k + 1]);
            if b.abs() < a.abs() && b.abs() <= c.abs() && b.abs() < 1e-8 {
                assert!(
                    a * c < 0.0 || b == 0.0,
                    "suspicious near-zero minimum without sign change at index {k}"
                );
            }
        }
    }

    #[test]
    fn pairing_defect_small_on_examples() {
        let d = pairing_defect(&build_oscillator(1.0), 1.0, 4096, 1e-5).unwrap();
        assert!(d < 1e-6, "oscillator defect {d:.3e}");
        let d = pairing_defect(&build_magnetic(1.0), 2.0, 4096, 1e-5).unwrap();
        assert!(d < 1e-6, "magnetic defect {d:.3e}");
    }

    #[test]
    fn pairing_defect_vanishing_y() {
        // Y = 0: the endpoint pairing is exactly Gamma-quadratic in p0 and
        // linear in s, so the central difference is exact
        let p = build_lti(&Matrix::scalar(1.0), &Matrix::scalar(0.0)).unwrap();
        let d = pairing_defect(&p, 2.0, 2048, 1e-4).unwrap();
        assert!(d < 1e-9, "defect {d:.3e}");
    }

    #[test]
    fn pairing_values_are_nonnegative() {
        for p in [build_oscillator(1.0), build_magnetic(1.0)] {
            for s in [-4.0, -1.0, 0.5, 2.0, 5.0] {
                for v in pairing_values(&p, s, 2048, 1e-5).unwrap() {
                    assert!(v >= -1e-9, "{}: pairing value {v:.3e} at s={s}", p.label);
                }
            }
        }
    }

    #[test]
    fn report_is_consistent_at_s_zero() {
        let p = build_magnetic(1.0);
        let rep = report(&p, 2048).unwrap();
        assert_eq!(rep.s, 1.0);
        // Q at s=0 equals Gamma within integration tolerance
        let q0 = extract_q(&flow(&p, 0.0, 2048).unwrap());
        assert!(q0.sub(&rep.gamma1).frobenius_norm() < 1e-9);
    }

    #[test]
    fn flow_rejects_bad_steps() {
        assert!(flow(&build_oscillator(1.0), 1.0, 7).is_err());
        assert!(flow(&build_oscillator(1.0), 1.0, 17).is_err());
    }
}
