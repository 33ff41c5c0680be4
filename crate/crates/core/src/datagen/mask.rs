use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// How many coordinates each component keeps active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RhoMode {
    #[serde(rename = "1var")]
    OneVar,
    #[serde(rename = "50%")]
    Half,
    #[serde(rename = "75%")]
    ThreeQuarters,
}

impl RhoMode {
    /// `⌊ρn⌋`, at least 1.
    pub fn support_size(self, n: usize) -> usize {
        match self {
            RhoMode::OneVar => 1,
            RhoMode::Half => (n / 2).max(1),
            RhoMode::ThreeQuarters => (3 * n / 4).max(1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RhoMode::OneVar => "1var",
            RhoMode::Half => "50",
            RhoMode::ThreeQuarters => "75",
        }
    }
}

impl fmt::Display for RhoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoMode::OneVar => "1var",
            RhoMode::Half => "50%",
            RhoMode::ThreeQuarters => "75%",
        })
    }
}

impl FromStr for RhoMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_end_matches('%') {
            "1var" | "1" => Ok(RhoMode::OneVar),
            "50" | "0.5" => Ok(RhoMode::Half),
            "75" | "0.75" => Ok(RhoMode::ThreeQuarters),
            other => Err(Error::Parameter(format!("unknown rho mode `{other}` (expected 1var, 50% or 75%)"))),
        }
    }
}

/// Binomial coefficient, saturating at `usize::MAX`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// `min(5n, C(n, |K|))`.
pub fn default_component_count(n: usize, rho: RhoMode) -> usize {
    (5 * n).min(binomial(n, rho.support_size(n)))
}

/// Masking pattern, translation and rotation shared by all samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub n: usize,
    /// 0-based, sorted, pairwise distinct, all of the same size.
    pub index_sets: Vec<Vec<usize>>,
    pub translation: Vec<f64>,
    pub theta_deg: f64,
    pub rotation: Matrix,
}

impl MaskSpec {
    pub fn num_components(&self) -> usize {
        self.index_sets.len()
    }
}

/// Product of Givens rotations by `theta_deg` on coordinate pairs (0,1), (2,3), ….
pub fn rotation_matrix(n: usize, theta_deg: f64) -> Matrix {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let mut r = Matrix::identity(n);
    for p in (0..n.saturating_sub(1)).step_by(2) {
        r[(p, p)] = c;
        r[(p, p + 1)] = -s;
        r[(p + 1, p)] = s;
        r[(p + 1, p + 1)] = c;
    }
    r
}

/// Draws `j` distinct index sets by rejection and sets `z⁰ = μ + δσ`.
#[allow(clippy::too_many_arguments)]
pub fn build_mask_spec(
    n: usize,
    j: usize,
    rho: RhoMode,
    delta: f64,
    theta_deg: f64,
    mu: &[f64],
    sigma: &[f64],
    rng: &mut RngStream,
) -> Result<MaskSpec> {
    if mu.len() != n || sigma.len() != n {
        return Err(Error::Dimension(format!("moments of length {}/{} for n = {n}", mu.len(), sigma.len())));
    }
    let size = rho.support_size(n);
    let available = binomial(n, size);
    if j == 0 || j > available {
        return Err(Error::Parameter(format!(
            "{j} components requested but only {available} distinct index sets of size {size} exist for n = {n}"
        )));
    }
    let mut seen = BTreeSet::new();
    let mut index_sets = Vec::with_capacity(j);
    while index_sets.len() < j {
        let mut k = rng.choose_distinct(n, size);
        k.sort_unstable();
        if seen.insert(k.clone()) {
            index_sets.push(k);
        }
    }
    let translation = mu.iter().zip(sigma).map(|(m, s)| m + delta * s).collect();
    Ok(MaskSpec { n, index_sets, translation, theta_deg, rotation: rotation_matrix(n, theta_deg) })
}
