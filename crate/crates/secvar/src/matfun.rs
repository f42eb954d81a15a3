//! Dense real linear algebra and matrix functions on small symmetric and
//! antisymmetric matrices.
//!
//! Everything downstream (coefficient paths, the Hamiltonian flow, the
//! Galerkin discretization, the closed-form identities) is built on the
//! routines here. Matrices are row-major `f64`; the dimensions that matter
//! are tiny (a few tens at most) except for the Galerkin form, which only
//! needs eigenvalues and goes through [`sym_eigenvalues`].
//!
//! Eigensolver choices: [`sym_eigen`] uses cyclic Jacobi rotations (robust,
//! gives orthonormal vectors, ideal at these sizes); [`sym_eigenvalues`]
//! uses Householder tridiagonalization plus implicit-shift QL so that the
//! large restricted Galerkin matrices stay tractable.

use crate::error::{Error, Result};

/// Absolute floor added to relative tolerances so zero matrices pass
/// symmetry/antisymmetry checks.
const NORM_FLOOR: f64 = 1e-300;

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>12.6} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Validating constructor: checks the entry count and that all entries
    /// are finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {}x{}={} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at flat index {bad}"
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// 1x1 matrix.
    pub fn scalar(x: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let mut m = self.clone();
        for x in &mut m.data {
            *x *= c;
        }
        m
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (x, y) in m.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        m
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (x, y) in m.data.iter_mut().zip(&other.data) {
            *x -= y;
        }
        m
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let srow = self.row(k);
            let orow = other.row(k);
            for (i, &a) in srow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_tr(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let srow = self.row(i);
            for j in 0..other.rows {
                let orow = other.row(j);
                let mut s = 0.0;
                for (a, b) in srow.iter().zip(orow) {
                    s += a * b;
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Relative asymmetry `||M - M^T||_F / ||M||_F` with an absolute floor.
    pub fn asymmetry(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                let d = self[(i, j)] - self[(j, i)];
                s += 2.0 * d * d;
            }
        }
        s.sqrt() / (self.frobenius_norm() + NORM_FLOOR)
    }

    pub fn check_symmetric(&self, tol: f64, what: &str) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "{what}: expected square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.asymmetry() > tol {
            return Err(Error::NotSymmetric(format!(
                "{what}: relative asymmetry {:.3e} exceeds {tol:.0e}",
                self.asymmetry()
            )));
        }
        Ok(())
    }

    /// Symmetrize in place: M <- (M + M^T)/2.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Full spectral decomposition of a symmetric matrix.
///
/// `values` ascending; `vectors` holds the corresponding orthonormal
/// eigenvectors as columns, so `V diag(values) V^T` reconstructs the input.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// `V diag(f(lambda)) V^T` — the standard symmetric functional calculus.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let fk = f(self.values[k]);
            if fk == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * fk;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps until the off-diagonal Frobenius norm falls below 1e-14 of the
/// matrix norm. Input must be symmetric within 1e-10 relative.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigen> {
    s.check_symmetric(1e-10, "sym_eigen")?;
    let n = s.rows();
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut a = s.clone();
    a.symmetrize();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm() + NORM_FLOOR;

    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };

    const MAX_SWEEPS: usize = 100;
    for _sweep in 0..MAX_SWEEPS {
        if off(&a) <= 1e-14 * norm {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - sn * akq;
                        a[(p, k)] = a[(k, p)];
                        a[(k, q)] = sn * akp + c * akq;
                        a[(q, k)] = a[(k, q)];
                    }
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    // sort ascending, permuting eigenvector columns along
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let values: Vec<f64> = idx.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in idx.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_col)] = v[(i, old_col)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Symmetric square root of a positive-definite matrix.
pub fn sym_sqrt(s: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(s)?;
    let max = eig.values.last().copied().unwrap_or(0.0);
    let tol = 1e-12 * max.max(0.0) + NORM_FLOOR;
    if let Some(&min) = eig.values.first() {
        if min <= tol {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {min:.3e} (largest {max:.3e})"
            )));
        }
    }
    let mut r = eig.apply(f64::sqrt);
    r.symmetrize();
    Ok(r)
}

/// Inverse of the symmetric square root, for the H_t = -I normalization.
pub fn sym_inv_sqrt(s: &Matrix) -> Result<Matrix> {
    let eig = sym_eigen(s)?;
    let max = eig.values.last().copied().unwrap_or(0.0);
    let tol = 1e-12 * max.max(0.0) + NORM_FLOOR;
    if let Some(&min) = eig.values.first() {
        if min <= tol {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {min:.3e} (largest {max:.3e})"
            )));
        }
    }
    let mut r = eig.apply(|x| 1.0 / x.sqrt());
    r.symmetrize();
    Ok(r)
}

/// Matrix exponential by scaling and squaring with an order-13 truncated
/// Taylor series; the scaled norm is kept at or below 0.5.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expm: expected square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let norm = m.frobenius_norm();
    let k = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let b = m.scale(0.5_f64.powi(k as i32));

    // Horner evaluation of sum_{j<=13} B^j / j!
    let id = Matrix::identity(n);
    let mut t = id.clone();
    for j in (1..=13u32).rev() {
        t = id.add(&b.matmul(&t).scale(1.0 / j as f64));
    }
    for _ in 0..k {
        t = t.matmul(&t);
    }
    Ok(t)
}

/// Taylor series of `psi(mu, t) = sinh(sqrt(mu) t)/sqrt(mu)` in `mu t^2`,
/// used near mu = 0 where the closed forms cancel.
fn psi_series(mu: f64, t: f64) -> f64 {
    let x = mu * t * t;
    t * (1.0 + x / 6.0 + x * x / 120.0 + x * x * x / 5040.0)
}

/// Scalar oscillatory solution value: `psi(mu, t)` with
/// `psi = sinh(sqrt(mu) t)/sqrt(mu)` for positive mu,
/// `sin(sqrt(-mu) t)/sqrt(-mu)` for negative mu, and `t` at zero.
pub fn psi(mu: f64, t: f64) -> f64 {
    if mu.abs() * t * t < 1e-6 {
        psi_series(mu, t)
    } else if mu > 0.0 {
        let w = mu.sqrt();
        (w * t).sinh() / w
    } else {
        let w = (-mu).sqrt();
        (w * t).sin() / w
    }
}

/// Matrix solution `V(t)` of the second-order system `V'' = S V`,
/// `V(0) = 0`, `V'(0) = I`, realized through the eigendecomposition of
/// the symmetric `S` and the scalar function [`psi`].
///
/// This gives an unambiguous meaning to `(-S)^{-1/2} sin((S)^{1/2} t)`
/// whatever the signs of the eigenvalues of `S`.
pub fn osc_solution(s: &Matrix, t: f64) -> Result<Matrix> {
    let eig = sym_eigen(s)?;
    let mut out = eig.apply(|mu| psi(mu, t));
    out.symmetrize();
    Ok(out)
}

/// Half the nuclear norm of an antisymmetric matrix: the sum of the moduli
/// of its conjugate eigenvalue pairs (each pair `±i zeta` counted once).
pub fn antisym_positive_sum(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "antisym_positive_sum: expected square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    // relative antisymmetry check
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let d = m[(i, j)] + m[(j, i)];
            s += if i == j { d * d } else { 2.0 * d * d };
        }
    }
    let defect = s.sqrt() / (m.frobenius_norm() + NORM_FLOOR);
    if defect > 1e-10 {
        return Err(Error::NotAntisymmetric(format!(
            "relative defect {defect:.3e} exceeds 1e-10"
        )));
    }
    Ok(singular_values(m)?.iter().sum::<f64>() / 2.0)
}

/// Singular values (descending) via the eigenvalues of `M^T M`.
///
/// Eigenvalues of the Gram matrix below `1e-14` of its largest one are
/// squared rounding noise; they are clamped to zero before the square root
/// amplifies them.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let gram = m.tr_matmul(m);
    let eig = sym_eigen(&gram)?;
    let cut = 1e-14 * eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let mut sv: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l <= cut { 0.0 } else { l.sqrt() })
        .collect();
    sv.reverse();
    Ok(sv)
}

/// Determinant by LU with partial pivoting.
pub fn lu_det(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "lu_det: expected square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for k in 0..n {
        let mut piv = k;
        let mut best = a[(k, k)].abs();
        for i in k + 1..n {
            if a[(i, k)].abs() > best {
                best = a[(i, k)].abs();
                piv = i;
            }
        }
        if best == 0.0 {
            return Ok(0.0);
        }
        if piv != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            det = -det;
        }
        det *= a[(k, k)];
        let pivot = a[(k, k)];
        for i in k + 1..n {
            let f = a[(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            a[(i, k)] = 0.0;
            for j in k + 1..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    Ok(det)
}

/// Solve `A X = B` by LU with partial pivoting (multiple right-hand sides).
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "solve: A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = a.rows();
    let nrhs = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let mut piv = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            if lu[(i, k)].abs() > best {
                best = lu[(i, k)].abs();
                piv = i;
            }
        }
        if best == 0.0 {
            return Err(Error::NonRegularPoint("singular matrix in solve".into()));
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            for j in 0..nrhs {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
            for j in 0..nrhs {
                x[(i, j)] -= f * x[(k, j)];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..nrhs {
            let mut s = x[(k, j)];
            for i in k + 1..n {
                s -= lu[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = s / lu[(k, k)];
        }
    }
    Ok(x)
}

/// All eigenvalues (ascending) of a symmetric matrix, without eigenvectors.
///
/// Householder reduction to tridiagonal form followed by implicit-shift QL.
/// This is the workhorse for the restricted Galerkin forms, whose dimension
/// reaches several thousand; the Jacobi solver stays quadratic-cost-free
/// only for the small matrices it is meant for.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    s.check_symmetric(1e-10, "sym_eigenvalues")?;
    let mut a = s.clone();
    a.symmetrize();
    sym_eigenvalues_in_place(&mut a)
}

/// Same as [`sym_eigenvalues`] but destroys the input, which matters when
/// the matrix occupies hundreds of megabytes.
pub fn sym_eigenvalues_in_place(a: &mut Matrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "sym_eigenvalues: expected square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    let (mut d, mut e) = tridiagonalize(a);
    tql_implicit(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(d)
}

/// Householder reduction of a symmetric matrix to tridiagonal form
/// (diagonal `d`, subdiagonal `e` with `e[i]` between rows i and i+1).
/// Only the lower triangle is referenced; the matrix is destroyed.
fn tridiagonalize(a: &mut Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut p = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i; // active leading block is 0..l
        let mut scale = 0.0;
        for k in 0..l {
            scale += a[(i, k)].abs();
        }
        if scale == 0.0 || l == 1 {
            e[i - 1] = a[(i, i - 1)];
            continue;
        }
        let mut h = 0.0;
        for k in 0..l {
            let v = a[(i, k)] / scale;
            u[k] = v;
            h += v * v;
        }
        let f = u[l - 1];
        let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
        e[i - 1] = scale * g;
        h -= f * g;
        u[l - 1] = f - g;

        // p = A u / h over the leading block, touching each row once
        for x in p.iter_mut().take(l) {
            *x = 0.0;
        }
        for j in 0..l {
            let uj = u[j];
            let row = &a.data[j * n..j * n + j];
            let mut s = 0.0;
            // fused dot (s += row.u) and axpy (p += uj*row)
            for (k, &ajk) in row.iter().enumerate() {
                s += ajk * u[k];
                p[k] += ajk * uj;
            }
            p[j] += s + a[(j, j)] * uj;
        }
        let mut ksum = 0.0;
        for k in 0..l {
            p[k] /= h;
            ksum += p[k] * u[k];
        }
        let hh = ksum / (2.0 * h);
        for k in 0..l {
            p[k] -= hh * u[k];
        }
        // rank-2 update A <- A - u p^T - p u^T on the lower triangle
        for j in 0..l {
            let uj = u[j];
            let pj = p[j];
            let row = &mut a.data[j * n..j * n + j + 1];
            for (k, ajk) in row.iter_mut().enumerate() {
                *ajk -= uj * p[k] + pj * u[k];
            }
        }
    }
    for i in 0..n {
        d[i] = a[(i, i)];
    }
    (d, e)
}

/// Implicit-shift QL on a symmetric tridiagonal matrix; eigenvalues land in
/// `d`, unsorted. `e` is the subdiagonal and is destroyed.
fn tql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Internal(
                    "tridiagonal QL failed to converge in 50 iterations".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    fn random_antisymmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        m
    }

    #[test]
    fn eigen_identity_is_all_ones() {
        let eig = sym_eigen(&Matrix::identity(3)).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eigen_diagonal_sorts_ascending() {
        let eig = sym_eigen(&Matrix::diag(&[4.0, 1.0])).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_two_by_two_hand_values() {
        // [[2,1],[1,2]] has characteristic polynomial (2-l)^2 - 1, roots 1 and 3.
        let m = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let eig = sym_eigen(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-13);
        assert!((eig.values[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_rejects_non_square_and_asymmetric() {
        assert!(sym_eigen(&Matrix::zeros(2, 3)).is_err());
        let m = Matrix::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(sym_eigen(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn eigen_reconstruction_and_orthonormality_on_random_input() {
        // 100 random symmetric matrices of sizes 1..=10
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..100 {
            let n = 1 + case % 10;
            let m = random_symmetric(&mut rng, n);
            let eig = sym_eigen(&m).unwrap();
            let rec = eig.apply(|x| x);
            let err = rec.sub(&m).frobenius_norm();
            assert!(
                err <= 1e-12 * (m.frobenius_norm() + 1e-300),
                "reconstruction error {err:.3e} at n={n}"
            );
            let vtv = eig.vectors.tr_matmul(&eig.vectors);
            let orth = vtv.sub(&Matrix::identity(n)).frobenius_norm();
            assert!(orth <= 1e-12, "orthonormality defect {orth:.3e} at n={n}");
        }
    }

    #[test]
    fn sqrt_identity_and_diagonal() {
        let r = sym_sqrt(&Matrix::identity(3)).unwrap();
        assert!(r.sub(&Matrix::identity(3)).frobenius_norm() < 1e-13);
        let r = sym_sqrt(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!(r.sub(&Matrix::diag(&[2.0, 3.0])).frobenius_norm() < 1e-13);
    }

    #[test]
    fn sqrt_two_by_two_squares_back() {
        // candidate [[2,1],[1,2]] squared is [[5,4],[4,5]]
        let s = Matrix::new(2, 2, vec![5.0, 4.0, 4.0, 5.0]).unwrap();
        let r = sym_sqrt(&s).unwrap();
        let expect = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(expect.matmul(&expect).sub(&s).frobenius_norm() < 1e-12);
        assert!(r.sub(&expect).frobenius_norm() < 1e-10);
        assert!(r.matmul(&r).sub(&s).frobenius_norm() < 1e-10 * s.frobenius_norm());
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        // [[1,2],[2,1]] has eigenvalues -1 and 3
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(sym_sqrt(&m), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn expm_zero_diagonal_nilpotent() {
        let e = expm(&Matrix::zeros(2, 2)).unwrap();
        assert!(e.sub(&Matrix::identity(2)).frobenius_norm() < 1e-15);

        let e = expm(&Matrix::diag(&[1.0, -1.0])).unwrap();
        let expect = Matrix::diag(&[1.0_f64.exp(), (-1.0_f64).exp()]);
        assert!(e.sub(&expect).frobenius_norm() < 1e-12 * expect.frobenius_norm());

        // nilpotent: series terminates, exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let n = Matrix::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let e = expm(&n).unwrap();
        let expect = Matrix::new(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(e.sub(&expect).frobenius_norm() < 1e-14);
    }

    #[test]
    fn expm_inverse_property_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..20 {
            let n = 1 + case % 6;
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            let norm = m.frobenius_norm();
            if norm > 5.0 {
                m = m.scale(5.0 / norm);
            }
            let prod = expm(&m).unwrap().matmul(&expm(&m.scale(-1.0)).unwrap());
            let err = prod.sub(&Matrix::identity(n)).frobenius_norm();
            assert!(err < 1e-10, "expm inverse defect {err:.3e} at n={n}");
        }
    }

    #[test]
    fn osc_scalar_values() {
        // psi(0, 1) = 1
        let v = osc_solution(&Matrix::scalar(0.0), 1.0).unwrap();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-14);
        // conjugate point: sin(pi)/pi = 0
        let v = osc_solution(&Matrix::scalar(-std::f64::consts::PI.powi(2)), 1.0).unwrap();
        assert!(v[(0, 0)].abs() < 1e-13);
        // hyperbolic branch: sinh(1)
        let v = osc_solution(&Matrix::scalar(1.0), 1.0).unwrap();
        assert!((v[(0, 0)] - 1.0_f64.sinh()).abs() < 1e-13);
    }

    #[test]
    fn osc_satisfies_the_second_order_ode() {
        // second difference quotient of t -> V(S,t) matches S V within O(h^2)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_symmetric(&mut rng, 3);
        let h = 1e-3;
        for &t in &[0.3, 0.7, 1.1] {
            let vm = osc_solution(&s, t - h).unwrap();
            let v0 = osc_solution(&s, t).unwrap();
            let vp = osc_solution(&s, t + h).unwrap();
            let second = vp.add(&vm).sub(&v0.scale(2.0)).scale(1.0 / (h * h));
            let sv = s.matmul(&v0);
            let err = second.sub(&sv).frobenius_norm();
            assert!(err < 1e-5 * (1.0 + sv.frobenius_norm()), "ODE defect {err:.3e}");
        }
    }

    #[test]
    fn osc_continuous_across_the_series_switch() {
        for &t in &[0.5, 1.0] {
            let lo = psi(1e-7, t);
            let hi = psi(1.0001e-6 / (t * t), t);
            assert!((lo - t).abs() < 1e-6);
            assert!(hi.is_finite());
        }
        // series and closed form agree just above the threshold
        let mu = 2e-6;
        assert!((psi(mu, 1.0) - psi_series(mu, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn antisym_positive_sum_values() {
        assert_eq!(antisym_positive_sum(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        let m = Matrix::new(2, 2, vec![0.0, 2.0, -2.0, 0.0]).unwrap();
        assert!((antisym_positive_sum(&m).unwrap() - 2.0).abs() < 1e-12);
        // block-diag of the 2 and 3 blocks sums to 5
        let mut b = Matrix::zeros(4, 4);
        b[(0, 1)] = 2.0;
        b[(1, 0)] = -2.0;
        b[(2, 3)] = 3.0;
        b[(3, 2)] = -3.0;
        assert!((antisym_positive_sum(&b).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn antisym_positive_sum_rejects_symmetric() {
        let m = Matrix::identity(2);
        assert!(matches!(
            antisym_positive_sum(&m),
            Err(Error::NotAntisymmetric(_))
        ));
    }

    #[test]
    fn antisym_positive_sum_scales_absolutely() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 2 + rng.gen_range(0..5);
            let m = random_antisymmetric(&mut rng, n);
            let base = antisym_positive_sum(&m).unwrap();
            let c: f64 = rng.gen_range(-3.0..3.0);
            let scaled = antisym_positive_sum(&m.scale(c)).unwrap();
            assert!(
                (scaled - c.abs() * base).abs() < 1e-10 * (1.0 + base),
                "|c| homogeneity failed: c={c}, base={base}, scaled={scaled}"
            );
        }
    }

    #[test]
    fn lu_det_and_solve() {
        let m = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((lu_det(&m).unwrap() - 3.0).abs() < 1e-14);
        let b = Matrix::new(2, 1, vec![3.0, 3.0]).unwrap();
        let x = solve(&m, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((lu_det(&Matrix::zeros(2, 2)).unwrap()).abs() == 0.0);
    }

    #[test]
    fn large_eigenvalue_path_matches_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &n in &[1usize, 2, 3, 5, 12, 30] {
            let m = random_symmetric(&mut rng, n);
            let jac = sym_eigen(&m).unwrap().values;
            let ql = sym_eigenvalues(&m).unwrap();
            for (a, b) in jac.iter().zip(&ql) {
                assert!(
                    (a - b).abs() < 1e-11 * (1.0 + m.frobenius_norm()),
                    "n={n}: jacobi {a} vs ql {b}"
                );
            }
        }
    }

    #[test]
    fn singular_values_of_rotation_scaled() {
        let m = Matrix::new(2, 2, vec![0.0, 2.0, -2.0, 0.0]).unwrap();
        let sv = singular_values(&m).unwrap();
        assert!((sv[0] - 2.0).abs() < 1e-12);
        assert!((sv[1] - 2.0).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn symmetric_matrix(n: usize) -> impl Strategy<Value = Matrix> {
            proptest::collection::vec(-10.0_f64..10.0, n * (n + 1) / 2).prop_map(move |tri| {
                let mut m = Matrix::zeros(n, n);
                let mut it = tri.into_iter();
                for i in 0..n {
                    for j in 0..=i {
                        let v = it.next().unwrap();
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                m
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn eigen_reconstructs(m in symmetric_matrix(4)) {
                let eig = sym_eigen(&m).unwrap();
                let rec = eig.apply(|x| x);
                prop_assert!(rec.sub(&m).frobenius_norm() <= 1e-12 * (m.frobenius_norm() + 1.0));
            }

            #[test]
            fn eigenvalue_sum_matches_trace(m in symmetric_matrix(5)) {
                let eig = sym_eigen(&m).unwrap();
                let sum: f64 = eig.values.iter().sum();
                prop_assert!((sum - m.trace()).abs() <= 1e-11 * (1.0 + m.frobenius_norm()));
            }
        }
    }
}
