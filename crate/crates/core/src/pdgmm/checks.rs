use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::numerics::{
    column_space, norm, null_space, numeric_rank, pseudo_inverse, Matrix, RngStream,
    DEFAULT_RANK_TOL,
};
use crate::pdgmm::{mahalanobis, PdGmm};

const CONSTRAINT_PINV_TOL: f64 = 1e-10;
const AGREEMENT_TOL: f64 = 1e-9;

/// Common points of several affine supports `offset + span(columns)`.
#[derive(Clone, Debug)]
pub struct Intersection {
    /// Minimum-norm point of the intersection.
    pub point: Vec<f64>,
    /// Orthonormal directions spanning the intersection (n x r).
    pub directions: Matrix,
}

/// Solves the stacked orthogonal-complement constraints by least squares. Returns `None`
/// when the residual exceeds `tol` (empty intersection).
pub fn support_intersection(supports: &[(&[f64], &Matrix)], tol: f64) -> Result<Option<Intersection>> {
    let Some(&(first, _)) = supports.first() else {
        return Err(Error::Parameter("intersection of zero supports".into()));
    };
    let n = first.len();
    let mut blocks = Vec::with_capacity(supports.len());
    let mut rhs = Vec::with_capacity(supports.len() * n);
    for &(offset, span) in supports {
        if offset.len() != n || span.rows() != n {
            return Err(Error::Dimension("supports of different dimension".into()));
        }
        let q = if span.cols() == 0 { Matrix::zeros(n, 0) } else { column_space(span, DEFAULT_RANK_TOL)? };
        let complement = Matrix::identity(n).sub(&q.matmul_t(&q)?)?;
        rhs.extend(complement.matvec(offset)?);
        blocks.push(complement);
    }
    let c = Matrix::vstack(&blocks)?;
    let point = pseudo_inverse(&c, CONSTRAINT_PINV_TOL)?.matvec(&rhs)?;
    let fitted = c.matvec(&point)?;
    let residual = norm(&fitted.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
    if residual > tol * (1.0 + norm(&rhs)) {
        return Ok(None);
    }
    let directions = null_space(&c, CONSTRAINT_PINV_TOL)?;
    Ok(Some(Intersection { point, directions }))
}

#[derive(Clone, Copy, Debug)]
pub struct GenericityOptions {
    /// Points drawn in each intersection.
    pub n_probe: usize,
    /// Distances closer than this count as equal.
    pub tol: f64,
    /// Cap on the number of component subsets examined.
    pub max_subsets: usize,
    /// Residual tolerance for deciding that supports intersect.
    pub support_tol: f64,
}

impl Default for GenericityOptions {
    fn default() -> Self {
        Self { n_probe: 64, tol: 1e-6, max_subsets: 4096, support_tol: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupVerdict {
    Pass,
    SuspectFail,
}

/// Outcome for one set of equal-rank components with intersecting supports.
#[derive(Clone, Debug)]
pub struct GenericityGroup {
    pub rank: usize,
    pub components: Vec<usize>,
    pub verdict: GroupVerdict,
    /// Largest, over probes, of the smallest pairwise distance gap.
    pub best_gap: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GenericityReport {
    pub groups: Vec<GenericityGroup>,
    /// Set when `max_subsets` stopped the enumeration early.
    pub truncated: bool,
}

impl GenericityReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.verdict == GroupVerdict::Pass)
    }
}

/// Sampled check that equal-rank components with intersecting supports can be told apart
/// by their degenerate Mahalanobis distances somewhere in the intersection.
pub fn check_genericity(p: &PdGmm, opts: &GenericityOptions, rng: &mut RngStream) -> Result<GenericityReport> {
    let mut report = GenericityReport::default();
    let ranks: BTreeSet<usize> = p.components().iter().map(|c| c.rank()).collect();
    let mut examined = 0usize;
    'outer: for rank in ranks {
        let members: Vec<usize> = (0..p.num_components()).filter(|&j| p.components()[j].rank() == rank).collect();
        for size in 2..=members.len() {
            for subset in combinations(members.len(), size) {
                if examined >= opts.max_subsets {
                    report.truncated = true;
                    break 'outer;
                }
                examined += 1;
                let comps: Vec<usize> = subset.iter().map(|&i| members[i]).collect();
                let supports: Vec<(&[f64], &Matrix)> =
                    comps.iter().map(|&j| (p.components()[j].mean(), p.components()[j].factor())).collect();
                let Some(inter) = support_intersection(&supports, opts.support_tol)? else {
                    continue;
                };
                let best_gap = probe_gap(p, &comps, &inter, opts, rng)?;
                let verdict = if best_gap > opts.tol { GroupVerdict::Pass } else { GroupVerdict::SuspectFail };
                report.groups.push(GenericityGroup { rank, components: comps, verdict, best_gap });
            }
        }
    }
    Ok(report)
}

fn probe_gap(
    p: &PdGmm,
    comps: &[usize],
    inter: &Intersection,
    opts: &GenericityOptions,
    rng: &mut RngStream,
) -> Result<f64> {
    let r = inter.directions.cols();
    let probes = if r == 0 { 1 } else { opts.n_probe.max(1) };
    let mut best = f64::NEG_INFINITY;
    for k in 0..probes {
        let mut z = inter.point.clone();
        if k > 0 {
            let g: Vec<f64> = (0..r).map(|_| rng.normal()).collect();
            for (zi, d) in z.iter_mut().zip(inter.directions.matvec(&g)?) {
                *zi += d;
            }
        }
        let dists = comps
            .iter()
            .map(|&j| mahalanobis(&z, &p.components()[j], DEFAULT_RANK_TOL))
            .collect::<Result<Vec<_>>>()?;
        let mut gap = f64::INFINITY;
        for a in 0..dists.len() {
            for b in a + 1..dists.len() {
                gap = gap.min((dists[a] - dists[b]).abs());
            }
        }
        best = best.max(gap);
    }
    Ok(best)
}

fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let next = {
            let c = cur.as_mut().expect("checked above");
            let mut i = k;
            loop {
                if i == 0 {
                    break None;
                }
                i -= 1;
                if c[i] < n - k + i {
                    c[i] += 1;
                    for j in i + 1..k {
                        c[j] = c[j - 1] + 1;
                    }
                    break Some(());
                }
            }
        };
        if next.is_none() {
            cur = None;
        }
        Some(out)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variability {
    Sufficient,
    /// `coordinate` (0-based) is the first one whose complement is not covered.
    Violated { coordinate: usize },
}

/// For every coordinate `i`, the union of the index sets that exclude `i` must be all
/// other coordinates.
pub fn check_sufficient_variability(index_sets: &[Vec<usize>], n: usize) -> Variability {
    for i in 0..n {
        let mut covered = vec![false; n];
        for k in index_sets.iter().filter(|k| !k.contains(&i)) {
            for &c in k.iter().filter(|&&c| c < n) {
                covered[c] = true;
            }
        }
        if (0..n).any(|c| c != i && !covered[c]) {
            return Variability::Violated { coordinate: i };
        }
    }
    Variability::Sufficient
}

/// A shared translation point and basis in which every support is spanned by a subset
/// of basis vectors.
#[derive(Clone, Debug)]
pub struct CommonBasis {
    pub translation: Vec<f64>,
    /// `n x n`; column `k` is basis vector `k`.
    pub basis: Matrix,
    /// Per support, the (0-based) basis vectors spanning it.
    pub index_sets: Vec<Vec<usize>>,
}

/// Greedy search for a common translation and basis over affine supports given as
/// `(offset, span)`. Returns `None` when the supports do not intersect or their
/// directions cannot be drawn from one basis.
pub fn check_common_basis(supports: &[(Vec<f64>, Matrix)], tol: f64) -> Result<Option<CommonBasis>> {
    let refs: Vec<(&[f64], &Matrix)> = supports.iter().map(|(o, s)| (o.as_slice(), s)).collect();
    let Some(inter) = support_intersection(&refs, tol)? else {
        return Ok(None);
    };
    let n = inter.point.len();
    let spans = supports
        .iter()
        .map(|(_, s)| if s.cols() == 0 { Ok(Matrix::zeros(n, 0)) } else { column_space(s, DEFAULT_RANK_TOL) })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..supports.len()).collect();
    order.sort_by_key(|&j| spans[j].cols());
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut index_sets = vec![Vec::new(); supports.len()];
    for &j in &order {
        let q = &spans[j];
        let dim = q.cols();
        let mut chosen: Vec<usize> =
            (0..basis.len()).filter(|&b| residual_outside(&basis[b], q) <= tol * norm(&basis[b])).collect();
        if chosen.len() < dim {
            let mut within: Vec<Vec<f64>> = chosen.iter().map(|&b| basis[b].clone()).collect();
            for c in 0..supports[j].1.cols() {
                if within.len() == dim {
                    break;
                }
                let cand = supports[j].1.column(c);
                if extends(&within, &cand, tol) {
                    within.push(cand.clone());
                    basis.push(cand);
                    chosen.push(basis.len() - 1);
                }
            }
        }
        if chosen.len() != dim || basis.len() > n {
            return Ok(None);
        }
        index_sets[j] = chosen;
    }
    let cols: Vec<Matrix> = basis.iter().map(|v| Matrix::column_vector(v)).collect();
    if !basis.is_empty() && numeric_rank(&Matrix::hstack(&cols)?, DEFAULT_RANK_TOL)? != basis.len() {
        return Ok(None);
    }
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        if extends(&basis, &e, tol) {
            basis.push(e);
        }
    }
    let basis = Matrix::from_fn(n, n, |r, c| basis[c][r]);
    index_sets.iter_mut().for_each(|k| k.sort_unstable());
    Ok(Some(CommonBasis { translation: inter.point, basis, index_sets }))
}

/// Norm of the part of `v` outside the column space of orthonormal `q`.
fn residual_outside(v: &[f64], q: &Matrix) -> f64 {
    let coef = q.transpose().matvec(v).expect("shapes agree");
    let proj = q.matvec(&coef).expect("shapes agree");
    norm(&v.iter().zip(&proj).map(|(a, b)| a - b).collect::<Vec<_>>())
}

fn extends(set: &[Vec<f64>], cand: &[f64], tol: f64) -> bool {
    if norm(cand) == 0.0 {
        return false;
    }
    if set.is_empty() {
        return true;
    }
    let cols: Vec<Matrix> = set.iter().map(|v| Matrix::column_vector(v)).collect();
    let q = column_space(&Matrix::hstack(&cols).expect("equal lengths"), DEFAULT_RANK_TOL).expect("finite input");
    residual_outside(cand, &q) > tol.max(DEFAULT_RANK_TOL) * norm(cand)
}

/// Builds the single affine map `z ↦ a·z + b` that restricts to each per-component map on
/// its support `z⁰ + span{basis_k : k ∈ K_j}`.
pub fn assemble_global_affine(
    per_component: &[(Matrix, Vec<f64>)],
    z0: &[f64],
    basis: &Matrix,
    index_sets: &[Vec<usize>],
) -> Result<(Matrix, Vec<f64>)> {
    let n = z0.len();
    if basis.shape() != (n, n) || numeric_rank(basis, DEFAULT_RANK_TOL)? != n {
        return Err(Error::NotABasis(format!(
            "{}x{} matrix of rank {} in dimension {n}",
            basis.rows(),
            basis.cols(),
            if basis.rows() == 0 { 0 } else { numeric_rank(basis, DEFAULT_RANK_TOL)? }
        )));
    }
    if per_component.is_empty() || per_component.len() != index_sets.len() {
        return Err(Error::Parameter(format!(
            "{} maps for {} index sets",
            per_component.len(),
            index_sets.len()
        )));
    }
    let d = per_component[0].0.rows();
    let apply = |j: usize, z: &[f64]| -> Result<Vec<f64>> {
        let (h, b) = &per_component[j];
        if h.shape() != (d, n) || b.len() != d {
            return Err(Error::Dimension(format!("map {j} has shape {:?}", h.shape())));
        }
        Ok(h.matvec(z)?.iter().zip(b).map(|(x, y)| x + y).collect())
    };
    let f0 = apply(0, z0)?;
    let scale = 1.0 + norm(&f0);
    for j in 1..per_component.len() {
        if max_diff(&apply(j, z0)?, &f0) > AGREEMENT_TOL * scale {
            return Err(Error::Inconsistent { first: 0, second: j, what: "at the translation point".into() });
        }
    }
    let mut images = Matrix::zeros(d, n);
    for k in 0..n {
        let owners: Vec<usize> = (0..index_sets.len()).filter(|&j| index_sets[j].contains(&k)).collect();
        let Some(&first) = owners.first() else {
            return Err(Error::Uncovered(k));
        };
        let zk = basis.column(k);
        let img = per_component[first].0.matvec(&zk)?;
        let s = 1.0 + norm(&img);
        for &j in &owners[1..] {
            if max_diff(&per_component[j].0.matvec(&zk)?, &img) > AGREEMENT_TOL * s {
                return Err(Error::Inconsistent { first, second: j, what: format!("along basis direction {k}") });
            }
        }
        images.set_column(k, &img);
    }
    let a = images.matmul(&pseudo_inverse(basis, DEFAULT_RANK_TOL)?)?;
    let b = f0.iter().zip(a.matvec(z0)?).map(|(f, az)| f - az).collect();
    Ok((a, b))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
