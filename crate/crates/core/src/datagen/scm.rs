use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{blocks, Exec};
use crate::numerics::{Matrix, RngStream};

const ROW_BLOCK: usize = 4096;
pub(crate) const WEIGHT_RANGE: (f64, f64) = (0.2, 1.0);

/// Linear Gaussian SCM over a DAG stored in topological order.
///
/// `weights[(i, j)]` is the coefficient of `z_j` in the equation for `z_i`; only `j < i`
/// may be nonzero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    n: usize,
    weights: Matrix,
    noise_scale: Vec<f64>,
}

impl ScmSpec {
    pub fn new(weights: Matrix, noise_scale: Vec<f64>) -> Result<Self> {
        let n = weights.rows();
        if weights.cols() != n || noise_scale.len() != n {
            return Err(Error::Dimension(format!(
                "{}x{} weights with {} noise scales",
                n,
                weights.cols(),
                noise_scale.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if w == 0.0 {
                    continue;
                }
                if j >= i {
                    return Err(Error::Parameter(format!("edge {j}->{i} is not lower-triangular")));
                }
                if !(WEIGHT_RANGE.0..=WEIGHT_RANGE.1).contains(&w.abs()) {
                    return Err(Error::Parameter(format!("edge weight {w} outside ±[0.2, 1]")));
                }
            }
        }
        if noise_scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Parameter("noise scales must be positive".into()));
        }
        Ok(Self { n, weights, noise_scale })
    }

    /// Graph without edges and unit noise.
    pub fn empty(n: usize) -> Self {
        Self { n, weights: Matrix::zeros(n, n), noise_scale: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn noise_scale(&self) -> &[f64] {
        &self.noise_scale
    }

    pub fn edge_count(&self) -> usize {
        self.weights.data().iter().filter(|&&w| w != 0.0).count()
    }

    /// `L = (I − W)⁻¹·diag(noise)`, so that `Z = L·ε`.
    pub fn noise_map(&self) -> Matrix {
        let n = self.n;
        let mut l = Matrix::zeros(n, n);
        for c in 0..n {
            for i in c..n {
                let mut v = if i == c { 1.0 } else { 0.0 };
                for j in c..i {
                    v += self.weights[(i, j)] * l[(j, c)];
                }
                l[(i, c)] = v;
            }
        }
        for i in 0..n {
            for c in 0..n {
                l[(i, c)] *= self.noise_scale[c];
            }
        }
        l
    }

    /// Analytic covariance `L·Lᵀ`.
    pub fn covariance(&self) -> Matrix {
        let l = self.noise_map();
        l.matmul_t(&l).expect("square")
    }

    /// Analytic mean; zero for this model.
    pub fn mean(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }

    /// Analytic per-node standard deviation.
    pub fn std(&self) -> Vec<f64> {
        self.covariance().diag().iter().map(|v| v.sqrt()).collect()
    }

    /// One draw by forward substitution in topological order.
    pub(crate) fn draw_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        for i in 0..self.n {
            let parents: f64 = (0..i).map(|j| self.weights[(i, j)] * out[j]).sum();
            out[i] = parents + self.noise_scale[i] * rng.normal();
        }
    }
}

/// Random DAG with exactly `n·k` edges chosen uniformly among the lower-triangular
/// positions; weights uniform on `[−1, −0.2] ∪ [0.2, 1]`.
pub fn sample_er_dag(n: usize, k: usize, rng: &mut RngStream) -> Result<ScmSpec> {
    let slots = n * n.saturating_sub(1) / 2;
    let edges = n * k;
    if edges > slots {
        return Err(Error::Parameter(format!(
            "{edges} edges requested but a DAG on {n} nodes has at most {slots}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let mut weights = Matrix::zeros(n, n);
    for idx in rng.choose_distinct(slots, edges) {
        let (i, j) = pairs[idx];
        let mag = rng.uniform_range(WEIGHT_RANGE.0, WEIGHT_RANGE.1);
        weights[(i, j)] = if rng.coin() { mag } else { -mag };
    }
    ScmSpec::new(weights, vec![1.0; n])
}

/// `count` independent draws of the SCM.
pub fn simulate_scm(spec: &ScmSpec, count: usize, rng: &mut RngStream, exec: Exec) -> Matrix {
    let n = spec.n;
    let family = rng.split();
    let ranges = blocks(count, ROW_BLOCK);
    let parts = exec.map(ranges.len(), |b| {
        let (start, end) = ranges[b];
        let mut r = family.stream(b as u64);
        let mut rows = vec![0.0; (end - start) * n];
        for row in rows.chunks_exact_mut(n.max(1)) {
            spec.draw_into(&mut r, row);
        }
        rows
    });
    Matrix::from_vec(count, n, parts.concat()).expect("block sizes add up")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts() {
        let mut rng = RngStream::new(1, 0);
        assert_eq!(sample_er_dag(6, 0, &mut rng).unwrap().edge_count(), 0);
        assert_eq!(sample_er_dag(10, 2, &mut rng).unwrap().edge_count(), 20);
        let s = sample_er_dag(5, 2, &mut rng).unwrap();
        assert_eq!(s.edge_count(), 10);
        assert!(s.weights().data().iter().filter(|w| **w != 0.0).all(|w| (0.2..=1.0).contains(&w.abs())));
        assert!(sample_er_dag(5, 3, &mut rng).is_err());
    }

    #[test]
    fn chain_covariance() {
        let mut w = Matrix::zeros(2, 2);
        w[(1, 0)] = 0.8;
        let s = ScmSpec::new(w, vec![1.0, 1.0]).unwrap();
        let c = s.covariance();
        assert!((c[(0, 1)] - 0.8).abs() < 1e-15);
        assert!((c[(1, 1)] - 1.64).abs() < 1e-15);
        let z = simulate_scm(&s, 100_000, &mut RngStream::new(2, 0), Exec::Parallel);
        assert!((z.covariance()[(0, 1)] - 0.8).abs() < 0.05);
    }

    #[test]
    fn rejects_upper_triangular_edges() {
        let mut w = Matrix::zeros(2, 2);
        w[(0, 1)] = 0.5;
        assert!(ScmSpec::new(w, vec![1.0, 1.0]).is_err());
    }
}
