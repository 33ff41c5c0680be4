use crate::error::{Error, Result};
use crate::numerics::linalg::pseudo_inverse;
use crate::numerics::matrix::{dot, Matrix};

const NORMAL_SYSTEM_TOL: f64 = 1e-12;

/// Result of a least-squares fit with intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
    /// Set when the response is constant; `r2` is then reported as 0.
    pub degenerate: bool,
}

/// Centered design with a cached pseudo-inverse of the normal system, reusable across
/// many responses.
pub struct OlsDesign {
    centered: Matrix,
    means: Vec<f64>,
    normal_pinv: Matrix,
}

impl OlsDesign {
    pub fn new(x: &Matrix) -> Result<Self> {
        let (n, p) = x.shape();
        if n <= p + 1 {
            return Err(Error::Dimension(format!(
                "regression needs more than {} samples for {p} regressors, got {n}",
                p + 1
            )));
        }
        let means = x.column_means();
        let mut centered = x.clone();
        for i in 0..n {
            for (v, m) in centered.row_mut(i).iter_mut().zip(&means) {
                *v -= m;
            }
        }
        let normal = centered.t_matmul(&centered)?;
        let normal_pinv = if p == 0 { Matrix::zeros(0, 0) } else { pseudo_inverse(&normal, NORMAL_SYSTEM_TOL)? };
        Ok(Self { centered, means, normal_pinv })
    }

    pub fn fit(&self, y: &[f64]) -> Result<OlsFit> {
        let n = self.centered.rows();
        if y.len() != n {
            return Err(Error::Dimension(format!("{} responses for {n} samples", y.len())));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let xty = self.centered.t_matmul(&Matrix::column_vector(&yc))?;
        let coef = self.normal_pinv.matmul(&xty)?.into_data();
        let intercept = y_mean - dot(&self.means, &coef);
        let ss_tot: f64 = yc.iter().map(|v| v * v).sum();
        let fitted = self.centered.matvec(&coef)?;
        let ss_res: f64 = yc.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        if ss_tot == 0.0 {
            return Ok(OlsFit { coef, intercept, r2: 0.0, degenerate: true });
        }
        Ok(OlsFit { coef, intercept, r2: 1.0 - ss_res / ss_tot, degenerate: false })
    }
}

/// Ordinary least squares of `y` on the columns of `x` plus an intercept.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    OlsDesign::new(x)?.fit(y)
}
