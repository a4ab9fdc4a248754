//! Minimal dense linear algebra used by the assembly and stability routines.
//!
//! Everything here targets "desk scale" problems (a few thousand unknowns at
//! most), so the implementations favour robustness and reproducibility over
//! asymptotic speed:
//!
//! * [`Matrix`] is a row-major dense matrix of `f64`,
//! * [`Matrix::cholesky`] factors symmetric positive definite matrices,
//! * [`lu_solve`] solves general square systems with partial pivoting,
//! * [`sym_eig`] is a cyclic Jacobi eigensolver for symmetric matrices,
//! * [`sym_eig_gen`] reduces the generalized symmetric problem
//!   `A x = lambda M x` to standard form through the Cholesky factor of `M`,
//! * [`singular_values`] runs one-sided Jacobi orthogonalization, which keeps
//!   small singular values accurate enough for rank decisions at relative
//!   thresholds around `1e-10`.
//!
//! All routines are single-threaded and allocation order is fixed, so results
//! are bitwise reproducible for identical inputs.

use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Creates a `rows x cols` matrix filled with zeros.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Creates the `n x n` identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Creates a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Underlying row-major storage.
    pub fn data(&self) -> &[f64] {
        &self.data
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

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += aik * orow[j];
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
        y
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Cholesky factorization `A = L L^T` for symmetric positive definite `A`.
    pub fn cholesky(&self) -> Result<Cholesky> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotSpd(format!("pivot {d:.3e} at index {j}")));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Solves `L y = b` (forward substitution).
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for (k, &yk) in y.iter().enumerate().take(i) {
                s -= self.l[(i, k)] * yk;
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `L^T x = b` (back substitution).
    pub fn backward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, &xk) in x.iter().enumerate().skip(i + 1) {
                s -= self.l[(k, i)] * xk;
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b` with `A = L L^T`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows;
        assert_eq!(b.rows, n);
        let mut x = Matrix::zeros(n, b.cols);
        let mut col = vec![0.0; n];
        for j in 0..b.cols {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let sol = self.solve(&col);
            for i in 0..n {
                x[(i, j)] = sol[i];
            }
        }
        x
    }

    /// Computes `L^{-1} B` (forward substitution applied to every column).
    pub fn forward_matrix(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows;
        assert_eq!(b.rows, n);
        let mut x = Matrix::zeros(n, b.cols);
        let mut col = vec![0.0; n];
        for j in 0..b.cols {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let sol = self.forward(&col);
            for i in 0..n {
                x[(i, j)] = sol[i];
            }
        }
        x
    }

    /// Computes `L^{-T} B` (back substitution applied to every column).
    pub fn backward_matrix(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows;
        assert_eq!(b.rows, n);
        let mut x = Matrix::zeros(n, b.cols);
        let mut col = vec![0.0; n];
        for j in 0..b.cols {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let sol = self.backward(&col);
            for i in 0..n {
                x[(i, j)] = sol[i];
            }
        }
        x
    }
}

/// Dot product of two equally long slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves the square system `A x = b` by LU decomposition with partial
/// pivoting.  Returns [`Error::SingularSystem`] when a pivot falls below
/// `1e-14` times the largest entry of `A`.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch(format!("lu_solve of {}x{} matrix", a.rows, a.cols)));
    }
    if a.rows != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "lu_solve: matrix is {0}x{0} but rhs has length {1}",
            a.rows,
            b.len()
        )));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.to_vec();
    let tiny = 1e-14 * m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        // partial pivoting
        let mut piv = col;
        for r in col + 1..n {
            if m[(r, col)].abs() > m[(piv, col)].abs() {
                piv = r;
            }
        }
        if m[(piv, col)].abs() < tiny {
            return Err(Error::SingularSystem(format!("pivot column {col}")));
        }
        if piv != col {
            for j in 0..n {
                let t = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            x.swap(col, piv);
        }
        let d = m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            m[(r, col)] = 0.0;
            for j in col + 1..n {
                m[(r, j)] -= f * m[(col, j)];
            }
            x[r] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// Solves the symmetric eigenvalue problem `A v = lambda v` by the cyclic
/// Jacobi method (Givens rotations zeroing one off-diagonal pair at a time).
///
/// Returns the eigenvalues in ascending order together with the matrix whose
/// columns are the matching orthonormal eigenvectors.  The input must be
/// symmetric up to roundoff; it is symmetrized internally before iterating.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch(format!("sym_eig of {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    let scale = a.max_abs();
    if n > 1 && a.asymmetry() > 1e-8 * scale.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "sym_eig input is not symmetric (asymmetry {:.3e})",
            a.asymmetry()
        )));
    }
    let mut w = a.clone();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (w[(i, j)] + w[(j, i)]);
            w[(i, j)] = s;
            w[(j, i)] = s;
        }
    }
    let mut v = Matrix::identity(n);
    if n <= 1 {
        let vals = (0..n).map(|i| w[(i, i)]).collect();
        return Ok((vals, v));
    }
    let fro = w.fro_norm().max(f64::MIN_POSITIVE);
    let target = f64::EPSILON * fro;
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * w[(i, j)] * w[(i, j)];
            }
        }
        if off.sqrt() <= target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq.abs() <= f64::EPSILON * target {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                // rotation chosen so that the (p,q) entry becomes zero
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rows p and q
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                // columns p and q
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                // accumulate eigenvectors
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // final check: accept if the remaining off-diagonal mass is tiny
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * w[(i, j)] * w[(i, j)];
            }
        }
        if off.sqrt() > 1e3 * target {
            return Err(Error::NoConvergence(format!(
                "jacobi eigensolver: off-diagonal norm {:.3e} after {} sweeps",
                off.sqrt(),
                JACOBI_MAX_SWEEPS
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(i, i)].partial_cmp(&w[(j, j)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vecs[(k, new)] = v[(k, old)];
        }
    }
    Ok((vals, vecs))
}

/// Solves the generalized symmetric eigenvalue problem `A x = lambda M x`
/// with `M` symmetric positive definite.
///
/// The problem is transformed to standard form `C y = lambda y` with
/// `C = L^{-1} A L^{-T}`, `M = L L^T`, solved by [`sym_eig`], and the
/// eigenvectors are mapped back through `x = L^{-T} y` (so they are
/// `M`-orthonormal).  Eigenvalues come back in ascending order.
pub fn sym_eig_gen(a: &Matrix, m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.rows != m.rows || a.cols != m.cols {
        return Err(Error::DimensionMismatch(format!(
            "sym_eig_gen: A is {}x{}, M is {}x{}",
            a.rows, a.cols, m.rows, m.cols
        )));
    }
    let chol = m.cholesky()?;
    // C = L^{-1} A L^{-T}
    let w = chol.forward_matrix(a);
    let c = chol.forward_matrix(&w.transpose());
    let (vals, y) = sym_eig(&c)?;
    let x = chol.backward_matrix(&y);
    Ok((vals, x))
}

/// Singular values of a dense matrix, descending, via one-sided Jacobi
/// (Hestenes) orthogonalization of the columns.
///
/// One-sided Jacobi determines small singular values to high relative
/// accuracy, which is what the rank decisions at thresholds like
/// `1e-10 * sigma_max` rely on.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    // work on the tall orientation so there are at most `min(r,c)` columns
    let mut u = if a.rows >= a.cols { a.clone() } else { a.transpose() };
    let m = u.rows;
    let n = u.cols;
    if n == 0 || m == 0 {
        return Ok(vec![0.0; n]);
    }
    let eps = f64::EPSILON;
    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for k in 0..m {
                    let uki = u[(k, i)];
                    let ukj = u[(k, j)];
                    alpha += uki * uki;
                    beta += ukj * ukj;
                    gamma += uki * ukj;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let uki = u[(k, i)];
                    let ukj = u[(k, j)];
                    u[(k, i)] = c * uki - s * ukj;
                    u[(k, j)] = s * uki + c * ukj;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "one-sided jacobi: columns not orthogonal after {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }
    let mut sigma: Vec<f64> = (0..n)
        .map(|j| {
            let mut s = 0.0;
            for k in 0..m {
                s += u[(k, j)] * u[(k, j)];
            }
            s.sqrt()
        })
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sigma)
}

/// Numerical rank: number of singular values above `rel_tol * sigma_max`.
pub fn rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let sigma = singular_values(a)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sigma.iter().filter(|&&s| s > rel_tol * smax).count())
}
