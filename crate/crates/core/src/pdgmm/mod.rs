//! Potentially degenerate Gaussian mixtures: representation, sampling and algebra.

mod checks;
mod io;

pub use checks::{
    assemble_global_affine, check_common_basis, check_genericity, check_sufficient_variability,
    support_intersection, CommonBasis, GenericityGroup, GenericityOptions, GenericityReport,
    GroupVerdict, Intersection, Variability,
};

use crate::error::{Error, Result};
use crate::exec::{blocks, Exec};
use crate::numerics::{norm, numeric_rank, pseudo_inverse, svd, Matrix, RngStream, DEFAULT_RANK_TOL};

const SAMPLE_BLOCK: usize = 4096;
const REDUCED_TOL: f64 = 1e-9;

/// One Gaussian component `N(mean, factor·factorᵀ)` with a full-column-rank factor.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussComponent {
    mean: Vec<f64>,
    factor: Matrix,
    basis_index: Option<Vec<usize>>,
}

impl GaussComponent {
    /// `basis_index` holds 0-based coordinates; rows of `factor` outside it must be zero.
    pub fn new(mean: Vec<f64>, factor: Matrix, basis_index: Option<Vec<usize>>) -> Result<Self> {
        let n = mean.len();
        if factor.rows() != n {
            return Err(Error::Dimension(format!(
                "factor has {} rows for a mean of length {n}",
                factor.rows()
            )));
        }
        if !factor.is_finite() || mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("component parameters".into()));
        }
        if factor.cols() > 0 {
            let rank = numeric_rank(&factor, DEFAULT_RANK_TOL)?;
            if rank != factor.cols() {
                return Err(Error::Parameter(format!(
                    "factor with {} columns has rank {rank}",
                    factor.cols()
                )));
            }
        }
        if let Some(k) = &basis_index {
            if let Some(&bad) = k.iter().find(|&&i| i >= n) {
                return Err(Error::Parameter(format!("basis index {bad} outside 0..{n}")));
            }
            for i in (0..n).filter(|i| !k.contains(i)) {
                if factor.row(i).iter().any(|&x| x != 0.0) {
                    return Err(Error::Parameter(format!(
                        "factor row {i} is nonzero but outside the basis index"
                    )));
                }
            }
        }
        Ok(Self { mean, factor, basis_index })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn basis_index(&self) -> Option<&[usize]> {
        self.basis_index.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.factor.cols()
    }

    pub fn covariance(&self) -> Matrix {
        self.factor.matmul_t(&self.factor).expect("factor shapes agree")
    }
}

/// Finite mixture of [`GaussComponent`]s in reduced form.
#[derive(Clone, Debug, PartialEq)]
pub struct PdGmm {
    weights: Vec<f64>,
    components: Vec<GaussComponent>,
    translation: Vec<f64>,
}

impl PdGmm {
    /// `translation` defaults to zeros when `None`.
    pub fn new(
        weights: Vec<f64>,
        components: Vec<GaussComponent>,
        translation: Option<Vec<f64>>,
    ) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::Parameter(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let n = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != n) {
            return Err(Error::Dimension(format!("component of dimension {} in a {n}-dimensional mixture", c.dim())));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Parameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("mixture weights sum to {total}")));
        }
        let translation = translation.unwrap_or_else(|| vec![0.0; n]);
        if translation.len() != n {
            return Err(Error::Dimension(format!("translation of length {}", translation.len())));
        }
        let covs: Vec<Matrix> = components.iter().map(|c| c.covariance()).collect();
        for a in 0..components.len() {
            for b in a + 1..components.len() {
                let dmu = distance(&components[a].mean, &components[b].mean);
                let dsig = covs[a].sub(&covs[b])?.frobenius_norm();
                if dmu <= REDUCED_TOL && dsig <= REDUCED_TOL {
                    return Err(Error::NotReduced(a, b));
                }
            }
        }
        Ok(Self { weights, components, translation })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussComponent] {
        &self.components
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    /// Index sets of all components, if every component carries one.
    pub fn index_sets(&self) -> Option<Vec<Vec<usize>>> {
        self.components.iter().map(|c| c.basis_index.clone()).collect()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Draws `count` rows and their component labels.
///
/// Rows are produced in blocks, each from its own child of `rng`, so the output does not
/// depend on `exec`.
pub fn sample(p: &PdGmm, count: usize, rng: &mut RngStream, exec: Exec) -> (Matrix, Vec<u32>) {
    let n = p.dim();
    let family = rng.split();
    let mut cumulative = Vec::with_capacity(p.weights.len());
    let mut acc = 0.0;
    for w in &p.weights {
        acc += w;
        cumulative.push(acc);
    }
    let ranges = blocks(count, SAMPLE_BLOCK);
    let parts = exec.map(ranges.len(), |b| {
        let (start, end) = ranges[b];
        let mut r = family.stream(b as u64);
        let mut rows = Vec::with_capacity((end - start) * n);
        let mut labels = Vec::with_capacity(end - start);
        let mut eps = Vec::new();
        for _ in start..end {
            let u = r.uniform() * acc;
            let j = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
            let c = &p.components[j];
            eps.resize(c.rank(), 0.0);
            r.fill_normal(&mut eps);
            for i in 0..n {
                let row = c.factor.row(i);
                rows.push(c.mean[i] + row.iter().zip(&eps).map(|(a, e)| a * e).sum::<f64>());
            }
            labels.push(j as u32);
        }
        (rows, labels)
    });
    let mut data = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for (rows, l) in parts {
        data.extend(rows);
        labels.extend(l);
    }
    (Matrix::from_vec(count, n, data).expect("block sizes add up"), labels)
}

/// Degenerate Mahalanobis distance `√((z−μ)ᵀ Σ⁺ (z−μ))`.
///
/// With `Σ = AAᵀ` and full-column-rank `A`, this equals `‖A⁺(z−μ)‖`.
pub fn mahalanobis(z: &[f64], c: &GaussComponent, tol: f64) -> Result<f64> {
    if z.len() != c.dim() {
        return Err(Error::Dimension(format!("point of length {} for a {}-dimensional component", z.len(), c.dim())));
    }
    if c.rank() == 0 {
        return Ok(0.0);
    }
    let pinv = pseudo_inverse(&c.factor, tol)?;
    let diff: Vec<f64> = z.iter().zip(&c.mean).map(|(a, b)| a - b).collect();
    Ok(norm(&pinv.matvec(&diff)?))
}

/// Image of the mixture under `z ↦ Hz + b`.
pub fn affine_pushforward(p: &PdGmm, h: &Matrix, b: &[f64]) -> Result<PdGmm> {
    if h.cols() != p.dim() || b.len() != h.rows() {
        return Err(Error::Dimension(format!(
            "{}x{} map with offset of length {} on a {}-dimensional mixture",
            h.rows(),
            h.cols(),
            b.len(),
            p.dim()
        )));
    }
    let mut comps = Vec::with_capacity(p.components.len());
    for c in &p.components {
        let mean: Vec<f64> = h.matvec(&c.mean)?.iter().zip(b).map(|(x, y)| x + y).collect();
        let mut factor = h.matmul(&c.factor)?;
        if factor.cols() > 0 && numeric_rank(&factor, DEFAULT_RANK_TOL)? < factor.cols() {
            factor = refactor(&factor)?;
        }
        let basis_index = c.basis_index.clone().filter(|k| {
            h.rows() == p.dim()
                && (0..h.rows()).filter(|i| !k.contains(i)).all(|i| factor.row(i).iter().all(|&x| x == 0.0))
        });
        comps.push(GaussComponent::new(mean, factor, basis_index)?);
    }
    let translation = h.matvec(&p.translation)?.iter().zip(b).map(|(x, y)| x + y).collect();
    PdGmm::new(p.weights.clone(), comps, Some(translation))
}

/// Full-column-rank factor `U_r·diag(s_r)` with the same Gram matrix `F·Fᵀ`.
fn refactor(f: &Matrix) -> Result<Matrix> {
    let d = svd(f)?;
    let r = crate::numerics::rank_from_singular_values(&d.s, DEFAULT_RANK_TOL);
    Ok(Matrix::from_fn(f.rows(), r, |i, j| d.u[(i, j)] * d.s[j]))
}

/// Finds `π` with component `j` of `p` matching component `π[j]` of `q` in weight, mean
/// and covariance to within `tol`.
pub fn equal_up_to_permutation(p: &PdGmm, q: &PdGmm, tol: f64) -> Option<Vec<usize>> {
    let j = p.num_components();
    if j != q.num_components() || p.dim() != q.dim() {
        return None;
    }
    let qcov: Vec<Matrix> = q.components.iter().map(|c| c.covariance()).collect();
    let dist: Vec<Vec<f64>> = p
        .components
        .iter()
        .zip(&p.weights)
        .map(|(c, w)| {
            let cov = c.covariance();
            (0..j)
                .map(|l| {
                    let dw = (w - q.weights[l]).abs();
                    let dm = distance(&c.mean, &q.components[l].mean);
                    let ds = cov.sub(&qcov[l]).map_or(f64::INFINITY, |d| d.frobenius_norm());
                    dw.max(dm).max(ds)
                })
                .collect()
        })
        .collect();

    let mut used = vec![false; j];
    let mut greedy = Vec::with_capacity(j);
    for row in &dist {
        let best = (0..j).filter(|&l| !used[l]).min_by(|&a, &b| row[a].total_cmp(&row[b]));
        match best {
            Some(l) if row[l] <= tol => {
                used[l] = true;
                greedy.push(l);
            }
            _ => break,
        }
    }
    if greedy.len() == j {
        return Some(greedy);
    }
    let feasible: Vec<Vec<usize>> =
        dist.iter().map(|row| (0..j).filter(|&l| row[l] <= tol).collect()).collect();
    bipartite_matching(&feasible, j)
}

/// Perfect matching on a bipartite feasibility graph by augmenting paths.
fn bipartite_matching(adj: &[Vec<usize>], right: usize) -> Option<Vec<usize>> {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    for u in 0..adj.len() {
        let mut seen = vec![false; right];
        if !augment(u, adj, &mut seen, &mut owner) {
            return None;
        }
    }
    let mut perm = vec![0; adj.len()];
    for (v, u) in owner.iter().enumerate() {
        if let Some(u) = u {
            perm[*u] = v;
        }
    }
    Some(perm)
}

/// Draws Gaussian `A` (`n x m`) until `rank(AᵀΣA) = rank(Σ)`. Returns `A` and the number
/// of draws used.
pub fn rank_preserving_projection(
    sigma: &Matrix,
    m: usize,
    rng: &mut RngStream,
    max_tries: usize,
) -> Result<(Matrix, usize)> {
    let n = sigma.rows();
    if sigma.cols() != n {
        return Err(Error::Dimension(format!("covariance of shape {}x{}", n, sigma.cols())));
    }
    let k = numeric_rank(sigma, DEFAULT_RANK_TOL)?;
    if k > m || m > n {
        return Err(Error::Parameter(format!("need rank {k} <= m = {m} <= n = {n}")));
    }
    for attempt in 1..=max_tries {
        let a = Matrix::from_fn(n, m, |_, _| rng.normal());
        let projected = a.t_matmul(&sigma.matmul(&a)?)?;
        if numeric_rank(&projected, DEFAULT_RANK_TOL)? == k {
            return Ok((a, attempt));
        }
    }
    Err(Error::ProjectionFailed { tries: max_tries })
}
