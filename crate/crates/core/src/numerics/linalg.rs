use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, Matrix};

/// Relative rank threshold used when a caller has no better value.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `M = U·diag(s)·Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows x r` with `r = min(rows, cols)`.
    pub u: Matrix,
    /// Non-increasing, length `r`.
    pub s: Vec<f64>,
    /// `cols x r`.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul_t(&self.v).expect("factor shapes agree")
    }
}

/// One-sided Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite(format!("svd input ({}x{})", m.rows(), m.cols())));
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose(), m.shape())?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    svd_tall(m, m.shape())
}

fn svd_tall(m: &Matrix, orig_shape: (usize, usize)) -> Result<Svd> {
    let (rows, cols) = m.shape();
    // Columns of M stored contiguously as rows of `a`.
    let mut a = m.transpose();
    let mut v = Matrix::identity(cols);
    let mut converged = cols < 2;
    // Columns at rounding level relative to the whole matrix are numerically zero.
    let frob2: f64 = a.data().iter().map(|x| x * x).sum();
    let tiny = frob2 * (f64::EPSILON * f64::EPSILON);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(a.row(p), a.row(p));
                let beta = dot(a.row(q), a.row(q));
                let gamma = dot(a.row(p), a.row(q));
                if alpha <= tiny || beta <= tiny || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            rows: orig_shape.0,
            cols: orig_shape.1,
            sweeps: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..cols).map(|j| dot(a.row(j), a.row(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s_max = norms.iter().cloned().fold(0.0, f64::max);
    let negligible = s_max * f64::EPSILON * rows.max(cols) as f64;

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    // `v` holds right singular vectors as rows, `a` holds U·diag(s) as rows.
    let vt = v.select_rows(&order);
    let mut ut = Matrix::zeros(cols, rows);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > negligible && norms[j] > 0.0 {
            for (dst, src) in ut.row_mut(k).iter_mut().zip(a.row(j)) {
                *dst = src / norms[j];
            }
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal_rows(&mut ut, &missing);
    Ok(Svd { u: ut.transpose(), s, v: vt.transpose() })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed rows with unit vectors orthogonal to every other row.
fn complete_orthonormal_rows(m: &mut Matrix, missing: &[usize]) {
    let width = m.cols();
    let mut candidate = 0;
    for &k in missing {
        loop {
            assert!(candidate < width, "cannot complete an orthonormal set");
            let mut e = vec![0.0; width];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for r in 0..m.rows() {
                    if r == k || (missing.contains(&r) && dot(m.row(r), m.row(r)) == 0.0) {
                        continue;
                    }
                    let proj = dot(&e, m.row(r));
                    for (x, y) in e.iter_mut().zip(m.row(r)) {
                        *x -= proj * y;
                    }
                }
            }
            let n = dot(&e, &e).sqrt();
            if n > 0.5 {
                for (dst, x) in m.row_mut(k).iter_mut().zip(&e) {
                    *dst = x / n;
                }
                break;
            }
        }
    }
}

/// Count of singular values above `tol · s_max`.
pub fn numeric_rank(m: &Matrix, tol: f64) -> Result<usize> {
    check_tol(tol)?;
    Ok(rank_from_singular_values(&svd(m)?.s, tol))
}

pub fn rank_from_singular_values(s: &[f64], tol: f64) -> usize {
    let s_max = s.first().copied().unwrap_or(0.0);
    if s_max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * s_max).count()
}

/// Moore–Penrose pseudo-inverse with relative cutoff `tol`.
pub fn pseudo_inverse(m: &Matrix, tol: f64) -> Result<Matrix> {
    check_tol(tol)?;
    let d = svd(m)?;
    let r = rank_from_singular_values(&d.s, tol);
    let mut vs = Matrix::zeros(m.cols(), r);
    for i in 0..m.cols() {
        for j in 0..r {
            vs[(i, j)] = d.v[(i, j)] / d.s[j];
        }
    }
    let ur = d.u.select_columns(&(0..r).collect::<Vec<_>>());
    vs.matmul_t(&ur)
}

/// Orthonormal basis of the null space of `m` (columns), using relative cutoff `tol`.
pub fn null_space(m: &Matrix, tol: f64) -> Result<Matrix> {
    let n = m.cols();
    if m.rows() == 0 {
        return Ok(Matrix::identity(n));
    }
    // Pad to at least n rows so the thin SVD exposes all right singular vectors.
    let padded = if m.rows() < n {
        Matrix::vstack(&[m.clone(), Matrix::zeros(n - m.rows(), n)])?
    } else {
        m.clone()
    };
    let d = svd(&padded)?;
    let r = rank_from_singular_values(&d.s, tol);
    Ok(d.v.select_columns(&(r..n).collect::<Vec<_>>()))
}

/// Orthonormal basis for the column space of `m` (columns), using relative cutoff `tol`.
pub fn column_space(m: &Matrix, tol: f64) -> Result<Matrix> {
    let d = svd(m)?;
    let r = rank_from_singular_values(&d.s, tol);
    Ok(d.u.select_columns(&(0..r).collect::<Vec<_>>()))
}

/// Modified Gram–Schmidt QR of a square or tall full-rank matrix; returns Q with the
/// sign convention `diag(R) > 0`.
pub fn orthonormalize_columns(m: &Matrix) -> Result<Matrix> {
    let mut qt = m.transpose();
    let k = qt.rows();
    for j in 0..k {
        for i in 0..j {
            let proj = dot(qt.row(j), qt.row(i));
            let (head, tail) = qt.data_mut().split_at_mut(j * m.rows());
            let qi = &head[i * m.rows()..(i + 1) * m.rows()];
            for (x, y) in tail[..m.rows()].iter_mut().zip(qi) {
                *x -= proj * y;
            }
        }
        let n = dot(qt.row(j), qt.row(j)).sqrt();
        if n <= f64::EPSILON * 16.0 {
            return Err(Error::Parameter("columns are linearly dependent".into()));
        }
        qt.row_mut(j).iter_mut().for_each(|x| *x /= n);
    }
    Ok(qt.transpose())
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::Dimension(format!("cholesky of {}x{}", n, m.cols())));
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = m[(i, i)] - s;
                if d <= 0.0 {
                    return Err(Error::Parameter("matrix is not positive definite".into()));
                }
                l[(i, j)] = d.sqrt();
            } else {
                l[(i, j)] = (m[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Largest over smallest singular value (infinite for singular input).
pub fn condition_number(m: &Matrix) -> Result<f64> {
    let s = svd(m)?.s;
    let lo = s.last().copied().unwrap_or(0.0);
    Ok(if lo == 0.0 { f64::INFINITY } else { s[0] / lo })
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("tolerance must be positive, got {tol}")))
    }
}
