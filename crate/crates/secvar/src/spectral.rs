//! Galerkin discretization of the compact second-variation operator on the
//! constrained control space, natural two-sided spectrum ordering,
//! principal-value trace/determinant series, and capacity estimates.
//!
//! The basis is piecewise-constant: one L2-normalized indicator per uniform
//! cell and control coordinate. Within-cell and cross-cell integrals of the
//! causal quadratic form are exact for coefficients frozen at cell midpoints,
//! so assembly needs no inner quadrature; the causal kernel contributes the
//! exact triangle factor (half a cell) on the diagonal blocks, whose
//! antisymmetric content then cancels in the stored symmetrization.
//!
//! The endpoint constraint `int X_t v(t) dt = 0` is removed by an
//! orthonormal kernel basis built from Householder reflections; the
//! restricted matrix is handed to the tridiagonal eigensolver.

use crate::error::{Error, Result};
use crate::matfun::{self, Matrix};
use crate::model::{self, Problem};

/// Assembled Galerkin data: the symmetrized form and the constraint map.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub n_cells: usize,
    pub m: usize,
    pub d: usize,
    /// (m n)-by-(m n) symmetrized matrix of the causal quadratic form.
    pub form: Matrix,
    /// d-by-(m n) matrix of `v -> int X_t v dt` in the normalized basis.
    pub constraint: Matrix,
}

/// Two-sided naturally ordered spectrum with multiplicity by repetition.
///
/// `pos` is decreasing; `neg` starts at the most negative eigenvalue and
/// increases toward zero, so index `k` in either list is the k-th term of
/// the natural ordering of that sign.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectrumReport {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    /// Discretization size (cells) that produced the report; 0 for
    /// closed-form reports.
    pub n: usize,
}

/// Principal-value limit estimate with its epsilon-series.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PvSeries {
    pub estimate: f64,
    /// `(epsilon, partial value)` pairs, epsilon decreasing.
    pub series: Vec<(f64, f64)>,
    /// False when no plateau was reached (inconclusive, not an error).
    pub converged: bool,
}

/// Capacity data fitted from a spectrum against the coefficient integral.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CapacityEstimate {
    /// `int_0^1 zeta_bar dt` from the coefficients.
    pub integral_zeta: f64,
    /// Median of `pi n alpha_n` over the window, positive branch.
    pub fitted_slope_pos: f64,
    /// Same for the negative branch (negative when the branch is infinite).
    pub fitted_slope_neg: f64,
    /// 1-based index window used for the fit.
    pub window: (usize, usize),
}

/// Assemble the Galerkin system on `n` uniform cells.
pub fn assemble(p: &Problem, n: usize) -> Result<GalerkinSystem> {
    let p = model::normalize(p)?;
    let d = p.state_dim();
    let m = p.control_dim();
    if n * m <= d {
        return Err(Error::InvalidArgument(format!(
            "Galerkin needs m*N > d for a nonempty constrained space, \
             got m={m}, N={n}, d={d}"
        )));
    }
    let dt = 1.0 / n as f64;

    // midpoint samples, flattened d x m row-major
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let c = p.path.eval((i as f64 + 0.5) * dt);
        ys.push(c.y.data().to_vec());
        xs.push(c.x.data().to_vec());
    }

    let size = m * n;
    let mut form = Matrix::zeros(size, size);
    // kernel block K_ij = Y_i^T X_j - X_i^T Y_j; the raw causal matrix has
    // dt K_ij below the diagonal, (dt/2) K_ii on it and zero above, so the
    // symmetrization is (dt/2) K_ij mirrored, with exactly antisymmetric
    // diagonal blocks cancelling.
    let mut block = vec![0.0; m * m];
    for i in 0..n {
        let yi = &ys[i];
        let xi = &xs[i];
        for j in 0..i {
            let yj = &ys[j];
            let xj = &xs[j];
            for a in 0..m {
                for b in 0..m {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += yi[k * m + a] * xj[k * m + b] - xi[k * m + a] * yj[k * m + b];
                    }
                    block[a * m + b] = 0.5 * dt * acc;
                }
            }
            for a in 0..m {
                for b in 0..m {
                    let v = block[a * m + b];
                    form[(i * m + a, j * m + b)] = v;
                    form[(j * m + b, i * m + a)] = v;
                }
            }
        }
    }

    // constraint row blocks X_i / sqrt(n): midpoint quadrature of the
    // endpoint map against the L2-normalized indicators
    let mut constraint = Matrix::zeros(d, size);
    let scale = 1.0 / (n as f64).sqrt();
    for i in 0..n {
        for k in 0..d {
            for a in 0..m {
                constraint[(k, i * m + a)] = xs[i][k * m + a] * scale;
            }
        }
    }

    Ok(GalerkinSystem {
        n_cells: n,
        m,
        d,
        form,
        constraint,
    })
}

/// Householder reflectors spanning the QR of the constraint transpose.
struct Reflectors {
    /// (offset, beta, v) with v full-length, zero above the offset.
    data: Vec<(usize, f64, Vec<f64>)>,
    size: usize,
}

fn constraint_reflectors(constraint: &Matrix) -> Result<Reflectors> {
    let d = constraint.rows();
    let size = constraint.cols();
    // working copy of C^T as d columns
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|k| (0..size).map(|i| constraint[(k, i)]).collect())
        .collect();
    let scale = constraint.frobenius_norm();
    let mut data = Vec::with_capacity(d);
    for k in 0..d {
        let norm: f64 = cols[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale {
            return Err(Error::NonRegularPoint(format!(
                "constraint rank-deficient at row {k} (pivot {norm:.3e} vs scale {scale:.3e})"
            )));
        }
        let alpha = if cols[k][k] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; size];
        v[k..].copy_from_slice(&cols[k][k..]);
        v[k] -= alpha;
        let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            // column already aligned; identity reflector
            data.push((k, 0.0, v));
            continue;
        }
        let beta = 2.0 / vnorm2;
        // apply to the remaining columns
        for col in cols.iter_mut().skip(k + 1) {
            let dot: f64 = v[k..]
                .iter()
                .zip(&col[k..])
                .map(|(a, b)| a * b)
                .sum();
            let w = beta * dot;
            for (vi, ci) in v[k..].iter().zip(col[k..].iter_mut()) {
                *ci -= w * vi;
            }
        }
        data.push((k, beta, v));
    }
    Ok(Reflectors { data, size })
}

/// Restriction of the form to the constraint kernel: `B^T F B` with `B` an
/// orthonormal kernel basis, computed by two-sided Householder application
/// and extraction of the trailing block. The result is symmetric to
/// rounding and has size `m n - d`.
pub fn restrict(sys: &GalerkinSystem) -> Result<Matrix> {
    let mut form = sys.form.clone();
    restrict_in_place(&mut form, &sys.constraint)
}

fn restrict_in_place(form: &mut Matrix, constraint: &Matrix) -> Result<Matrix> {
    let refl = constraint_reflectors(constraint)?;
    let n = refl.size;
    let d = constraint.rows();
    let mut u = vec![0.0; n];
    let mut kvec = vec![0.0; n];
    for (off, beta, v) in &refl.data {
        if *beta == 0.0 {
            continue;
        }
        let off = *off;
        // u = beta * F v (only v[off..] is nonzero)
        for i in 0..n {
            let row = &form.data()[i * n + off..i * n + n];
            let mut s = 0.0;
            for (a, b) in row.iter().zip(&v[off..]) {
                s += a * b;
            }
            u[i] = beta * s;
        }
        // K = u - (beta/2) (v^T u) v
        let vtu: f64 = v[off..]
            .iter()
            .zip(&u[off..])
            .map(|(a, b)| a * b)
            .sum();
        let gamma = 0.5 * beta * vtu;
        for i in 0..n {
            kvec[i] = u[i] - gamma * v[i];
        }
        // F -= K v^T + v K^T
        for i in 0..n {
            let ki = kvec[i];
            let vi = v[i];
            let row = &mut form.data_mut()[i * n..i * n + n];
            if vi == 0.0 {
                for (r, &vj) in row[off..].iter_mut().zip(&v[off..]) {
                    *r -= ki * vj;
                }
            } else {
                for j in 0..n {
                    row[j] -= ki * v[j] + vi * kvec[j];
                }
            }
        }
    }
    // trailing block
    let size = n - d;
    let mut out = Matrix::zeros(size, size);
    for i in 0..size {
        let src = &form.data()[(d + i) * n + d..(d + i) * n + n];
        out.data_mut()[i * size..(i + 1) * size].copy_from_slice(src);
    }
    out.symmetrize();
    Ok(out)
}

/// Orthonormal basis of the constraint kernel as columns (mostly a test
/// surface; the spectrum path never materializes it).
pub fn kernel_basis(sys: &GalerkinSystem) -> Result<Matrix> {
    let refl = constraint_reflectors(&sys.constraint)?;
    let n = refl.size;
    let d = sys.constraint.rows();
    let cols = n - d;
    let mut b = Matrix::zeros(n, cols);
    for j in 0..cols {
        b[(d + j, j)] = 1.0;
    }
    // B = H_0 H_1 ... H_{d-1} E_trailing: apply reflectors in reverse
    for (off, beta, v) in refl.data.iter().rev() {
        if *beta == 0.0 {
            continue;
        }
        let off = *off;
        for j in 0..cols {
            let mut dot = 0.0;
            for i in off..n {
                dot += v[i] * b[(i, j)];
            }
            let w = beta * dot;
            for i in off..n {
                b[(i, j)] -= w * v[i];
            }
        }
    }
    Ok(b)
}

/// Eigenvalue noise floor: discretization eigenvalues below this magnitude
/// are discarded as numerical zeros (the operator norm is O(1) in all the
/// example families, so the floor is absolute).
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

fn split_spectrum(mut eigs: Vec<f64>, n: usize) -> SpectrumReport {
    eigs.retain(|x| x.abs() > EIGENVALUE_FLOOR);
    let mut pos: Vec<f64> = eigs.iter().copied().filter(|x| *x > 0.0).collect();
    let mut neg: Vec<f64> = eigs.iter().copied().filter(|x| *x < 0.0).collect();
    pos.sort_by(|a, b| b.partial_cmp(a).unwrap());
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    SpectrumReport { pos, neg, n }
}

/// Galerkin spectrum of the operator on the constrained space.
pub fn spectrum(p: &Problem, n: usize) -> Result<SpectrumReport> {
    let sys = assemble(p, n)?;
    let mut form = sys.form;
    let mut restricted = restrict_in_place(&mut form, &sys.constraint)?;
    drop(form);
    let eigs = matfun::sym_eigenvalues_in_place(&mut restricted)?;
    Ok(split_spectrum(eigs, n))
}

/// Quadrature-free spectrum oracle for the LTI family: `alpha = -s` over
/// the generalized eigenvalues `R x = s (A^2 + (pi n)^2 I) x`, n up to
/// `n_max`, multiplicities preserved.
pub fn lti_closed_spectrum(a: &Matrix, r: &Matrix, n_max: usize) -> Result<SpectrumReport> {
    a.check_symmetric(1e-10, "lti_closed_spectrum: A")?;
    r.check_symmetric(1e-10, "lti_closed_spectrum: R")?;
    if a.rows() != r.rows() {
        return Err(Error::Dimension(format!(
            "A is {}x{}, R is {}x{}",
            a.rows(),
            a.cols(),
            r.rows(),
            r.cols()
        )));
    }
    let a2 = a.matmul(a);
    let mut eigs = Vec::new();
    for k in 1..=n_max {
        let w = (std::f64::consts::PI * k as f64).powi(2);
        let mut b = a2.clone();
        for i in 0..b.rows() {
            b[(i, i)] += w;
        }
        // B positive definite: s-values are eigenvalues of B^{-1/2} R B^{-1/2}
        let rb = matfun::sym_inv_sqrt(&b)?;
        let mut c = rb.tr_matmul(&r.matmul(&rb));
        c.symmetrize();
        for s in matfun::sym_eigen(&c)?.values {
            eigs.push(-s);
        }
    }
    Ok(split_spectrum(eigs, 0))
}

/// Default epsilon schedule: the eigenvalue magnitudes present, thinned to
/// at most 32 points at log-uniform ranks. Every epsilon is an actual
/// magnitude, and successive truncation bands grow geometrically, which
/// keeps the plateau increments comparable along the tail.
pub fn default_eps_schedule(rep: &SpectrumReport) -> Vec<f64> {
    let mut mags: Vec<f64> = rep
        .pos
        .iter()
        .chain(rep.neg.iter())
        .map(|x| x.abs())
        .collect();
    if mags.is_empty() {
        return vec![];
    }
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let count = mags.len();
    if count <= 32 {
        return mags;
    }
    let ln_n = (count as f64).ln();
    let mut out = Vec::with_capacity(32);
    for k in 0..32 {
        let rank = (ln_n * k as f64 / 31.0).exp().round() as usize;
        let rank = rank.clamp(1, count);
        let e = mags[rank - 1];
        if out.last() != Some(&e) {
            out.push(e);
        }
    }
    out
}

fn pv_series(
    rep: &SpectrumReport,
    eps: &[f64],
    empty_value: f64,
    fold: impl Fn(f64, f64) -> f64,
) -> PvSeries {
    let schedule: Vec<f64> = if eps.is_empty() {
        default_eps_schedule(rep)
    } else {
        eps.to_vec()
    };
    // eigenvalues sorted by magnitude, descending
    let mut all: Vec<f64> = rep.pos.iter().chain(rep.neg.iter()).copied().collect();
    all.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    if schedule.is_empty() || all.is_empty() {
        return PvSeries {
            estimate: empty_value,
            series: vec![],
            converged: true,
        };
    }

    let mut series = Vec::with_capacity(schedule.len());
    let mut acc = empty_value;
    let mut idx = 0;
    for &e in &schedule {
        let cutoff = e * (1.0 - 1e-12);
        while idx < all.len() && all[idx].abs() >= cutoff {
            acc = fold(acc, all[idx]);
            idx += 1;
        }
        series.push((e, acc));
    }

    // plateau: trailing run of increments below the relative tolerance;
    // the scale floor keeps zero-limit series (cancelling spectra) decidable
    let max_abs_val = series.iter().fold(0.0_f64, |m, &(_, v)| m.max(v.abs()));
    let max_mag = all[0].abs();
    let tol = 1e-4 * max_abs_val.max(max_mag);
    let mut run = 0;
    for k in (1..series.len()).rev() {
        if (series[k].1 - series[k - 1].1).abs() <= tol {
            run += 1;
        } else {
            break;
        }
    }
    let converged = series.len() == 1 || run >= 2;
    PvSeries {
        estimate: series.last().unwrap().1,
        series,
        converged,
    }
}

/// Principal-value trace: symmetric-truncation partial sums over the
/// epsilon schedule (defaulted when empty), with the last plateau value as
/// the estimate.
pub fn pv_trace(rep: &SpectrumReport, eps: &[f64]) -> PvSeries {
    pv_series(rep, eps, 0.0, |acc, a| acc + a)
}

/// Principal-value determinant: partial products of `1 + alpha`.
pub fn pv_det(rep: &SpectrumReport, eps: &[f64]) -> PvSeries {
    pv_series(rep, eps, 1.0, |acc, a| acc * (1.0 + a))
}

/// Capacity density profile `t -> zeta_bar(t)` at cell midpoints and its
/// integral: half the nuclear norm of `Z_t^T J Z_t` after normalization.
pub fn capacity_density(p: &Problem, nt: usize) -> Result<(Vec<(f64, f64)>, f64)> {
    let p = model::normalize(p)?;
    if nt == 0 {
        return Err(Error::InvalidArgument(
            "capacity_density: nt must be positive".into(),
        ));
    }
    let dt = 1.0 / nt as f64;
    let mut profile = Vec::with_capacity(nt);
    let mut integral = 0.0;
    for i in 0..nt {
        let t = (i as f64 + 0.5) * dt;
        let zjz = model::z_j_z(&p.path.eval(t));
        let zeta = matfun::antisym_positive_sum(&zjz)?;
        profile.push((t, zeta));
        integral += dt * zeta;
    }
    Ok((profile, integral))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit the leading `1/(pi n)` coefficient of the natural ordering over an
/// index window and package it with the coefficient-side integral.
///
/// The median of `pi n alpha_n` is used, which is robust to the remainder
/// term and to the corrupted last octave of a discrete spectrum. A branch
/// whose spectrum ends before the window contributes slope 0 (the
/// zero-capacity case); the window itself must be sane and inside at least
/// one branch.
pub fn capacity_fit(
    rep: &SpectrumReport,
    window: (usize, usize),
    integral_zeta: f64,
) -> Result<CapacityEstimate> {
    let (lo, hi) = window;
    if lo == 0 || hi < lo {
        return Err(Error::InvalidArgument(format!(
            "capacity window must satisfy 1 <= lo <= hi, got [{lo}, {hi}]"
        )));
    }
    let empty = rep.pos.is_empty() && rep.neg.is_empty();
    if !empty && rep.pos.len() < lo && rep.neg.len() < lo {
        return Err(Error::InvalidArgument(format!(
            "capacity window [{lo}, {hi}] lies outside both branches \
             (pos has {}, neg has {})",
            rep.pos.len(),
            rep.neg.len()
        )));
    }
    let fit = |branch: &[f64]| -> f64 {
        if branch.len() < lo {
            return 0.0;
        }
        let hi_eff = hi.min(branch.len());
        let vals: Vec<f64> = (lo..=hi_eff)
            .map(|n| std::f64::consts::PI * n as f64 * branch[n - 1])
            .collect();
        median(vals)
    };
    Ok(CapacityEstimate {
        integral_zeta,
        fitted_slope_pos: fit(&rep.pos),
        fitted_slope_neg: fit(&rep.neg),
        window,
    })
}

/// Default capacity window `[N/16, N/8]` for a size-`N` discretization.
pub fn default_capacity_window(n: usize) -> (usize, usize) {
    ((n / 16).max(1), (n / 8).max(2))
}
