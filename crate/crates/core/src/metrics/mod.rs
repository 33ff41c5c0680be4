//! Evaluation of a learned representation against the true latents.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numerics::{hungarian_max, Matrix, OlsDesign};

/// Coefficient of determination of regressing each true latent on the representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    pub per_latent: Vec<f64>,
    pub mean: f64,
    /// Latents with constant values; their R² is reported as 0.
    pub degenerate: Vec<usize>,
}

/// Affine R²: for every latent `z_i`, OLS of `z_i` on all representation coordinates.
pub fn r2_score(representation: &Matrix, latents: &Matrix, exec: Exec) -> Result<R2Report> {
    if representation.rows() != latents.rows() {
        return Err(Error::Dimension(format!(
            "{} representation rows against {} latent rows",
            representation.rows(),
            latents.rows()
        )));
    }
    if !representation.is_finite() || !latents.is_finite() {
        return Err(Error::NonFinite("R² inputs".into()));
    }
    let design = OlsDesign::new(representation)?;
    let fits = exec.map(latents.cols(), |i| design.fit(&latents.column(i)));
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let per_latent: Vec<f64> = fits.iter().map(|f| f.r2).collect();
    let degenerate = fits.iter().enumerate().filter(|(_, f)| f.degenerate).map(|(i, _)| i).collect();
    let mean = per_latent.iter().sum::<f64>() / per_latent.len().max(1) as f64;
    Ok(R2Report { per_latent, mean, degenerate })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    /// `matrix[(i, j)]` correlates column `i` of the first input with column `j` of the second.
    pub matrix: Matrix,
    /// Set when some column had zero variance; its correlations are reported as 0.
    pub degenerate: bool,
}

fn centered_columns(m: &Matrix) -> Vec<(Vec<f64>, f64)> {
    (0..m.cols())
        .map(|j| {
            let mut c = m.column(j);
            let mean = c.iter().sum::<f64>() / c.len().max(1) as f64;
            c.iter_mut().for_each(|v| *v -= mean);
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (c, norm)
        })
        .collect()
}

/// Pearson correlations between every column of `a` and every column of `b`.
pub fn pearson_matrix(a: &Matrix, b: &Matrix, exec: Exec) -> Result<Correlation> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension(format!("{} rows against {}", a.rows(), b.rows())));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("correlation inputs".into()));
    }
    let ca = centered_columns(a);
    let cb = centered_columns(b);
    let degenerate = ca.iter().chain(&cb).any(|(_, n)| *n == 0.0);
    let values = exec.map(a.cols() * b.cols(), |k| {
        let ((x, nx), (y, ny)) = (&ca[k / b.cols()], &cb[k % b.cols()]);
        if *nx == 0.0 || *ny == 0.0 {
            return 0.0;
        }
        let r = x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (nx * ny);
        r.clamp(-1.0, 1.0)
    });
    Ok(Correlation { matrix: Matrix::from_vec(a.cols(), b.cols(), values)?, degenerate })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mcc {
    pub value: f64,
    /// `assignment[i]` is the representation coordinate matched to latent `i`.
    pub assignment: Vec<usize>,
    pub correlation: Correlation,
}

/// Mean absolute correlation under the best one-to-one matching of latents to
/// representation coordinates.
pub fn mcc(representation: &Matrix, latents: &Matrix, exec: Exec) -> Result<Mcc> {
    if representation.cols() != latents.cols() {
        return Err(Error::Dimension(format!(
            "MCC needs equal dimensions, got {} and {}",
            representation.cols(),
            latents.cols()
        )));
    }
    let correlation = pearson_matrix(latents, representation, exec)?;
    let abs = correlation.matrix.map(f64::abs);
    let assignment = hungarian_max(&abs)?;
    let value = assignment.iter().enumerate().map(|(i, &j)| abs[(i, j)]).sum::<f64>() / assignment.len().max(1) as f64;
    Ok(Mcc { value, assignment, correlation })
}

/// Sample mean and standard deviation (`n − 1` denominator, 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// One evaluated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub rho: String,
    pub delta: f64,
    pub theta: f64,
    pub seed: u64,
    pub r2_stage1: f64,
    pub mcc_stage1: f64,
    pub mcc_stage2: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

pub const CSV_HEADER: &str = "n,k,m,rho,delta,theta,seed,r2_stage1,mcc_stage1,mcc_stage2";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        let s2 = self.mcc_stage2.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n, self.k, self.m, self.rho, self.delta, self.theta, self.seed, self.r2_stage1, self.mcc_stage1, s2
        )
    }
}

pub fn write_csv(reports: &[MetricsReport], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Correlation matrix as CSV, latents as rows and representation coordinates as columns.
pub fn write_correlation_csv(c: &Matrix, mut w: impl Write) -> Result<()> {
    let header: Vec<String> = (0..c.cols()).map(|j| format!("h{j}")).collect();
    writeln!(w, "latent,{}", header.join(","))?;
    for i in 0..c.rows() {
        let row: Vec<String> = c.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "z{i},{}", row.join(","))?;
    }
    Ok(())
}
