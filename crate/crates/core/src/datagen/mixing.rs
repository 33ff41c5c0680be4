use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{blocks, Exec};
use crate::numerics::{condition_number, orthonormalize_columns, pseudo_inverse, Matrix, RngStream};

const ROW_BLOCK: usize = 4096;

/// Weight distribution for mixing layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixingInit {
    /// Gaussian draw orthonormalized by Gram–Schmidt (Haar-distributed orthogonal matrix).
    Orthogonal,
    /// Raw Gaussian entries with standard deviation `1/√n`.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions {
    pub init: MixingInit,
    pub bias_std: f64,
    pub cond_cap: f64,
    pub max_tries: usize,
    pub slope_range: (f64, f64),
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self { init: MixingInit::Orthogonal, bias_std: 0.0, cond_cap: 1e6, max_tries: 100, slope_range: (0.5, 1.5) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    /// Leaky-ReLU slope on the negative side; unused on the last layer.
    pub slope: f64,
    pub weight_inv: Matrix,
}

/// Invertible piecewise-affine MLP: leaky-ReLU after every layer except the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingNetwork {
    pub layers: Vec<MixLayer>,
}

impl MixingNetwork {
    pub fn dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// `m` square layers of width `n`. Only `d = n` is supported.
pub fn build_mixing(n: usize, d: usize, m: usize, opts: &MixingOptions, rng: &mut RngStream) -> Result<MixingNetwork> {
    if d != n {
        return Err(Error::Parameter(format!("observation dimension {d} must equal latent dimension {n}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::Parameter("mixing needs at least one layer and one dimension".into()));
    }
    let mut layers = Vec::with_capacity(m);
    for layer in 0..m {
        let mut accepted = None;
        for _ in 0..opts.max_tries {
            let g = Matrix::from_fn(n, n, |_, _| rng.normal() / (n as f64).sqrt());
            let w = match opts.init {
                MixingInit::Gaussian => g,
                MixingInit::Orthogonal => match orthonormalize_columns(&g) {
                    Ok(q) => q,
                    Err(_) => continue,
                },
            };
            if condition_number(&w)? <= opts.cond_cap {
                accepted = Some(w);
                break;
            }
        }
        let weight = accepted.ok_or(Error::MixingRejected { layer, tries: opts.max_tries })?;
        let bias = (0..n).map(|_| opts.bias_std * rng.normal()).collect();
        let slope = rng.uniform_range(opts.slope_range.0, opts.slope_range.1);
        let weight_inv = pseudo_inverse(&weight, 1e-15)?;
        layers.push(MixLayer { weight, bias, slope, weight_inv });
    }
    Ok(MixingNetwork { layers })
}

fn forward_rows(net: &MixingNetwork, z: &Matrix) -> Matrix {
    let last = net.layers.len() - 1;
    let mut x = z.clone();
    for (l, layer) in net.layers.iter().enumerate() {
        x = x.matmul_t(&layer.weight).expect("square layers");
        x.add_row_vector(&layer.bias);
        if l < last {
            let a = layer.slope;
            x.data_mut().iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v *= a;
                }
            });
        }
    }
    x
}

fn inverse_rows(net: &MixingNetwork, x: &Matrix) -> Matrix {
    let last = net.layers.len() - 1;
    let mut z = x.clone();
    for (l, layer) in net.layers.iter().enumerate().rev() {
        if l < last {
            let a = layer.slope;
            z.data_mut().iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v /= a;
                }
            });
        }
        let neg_bias: Vec<f64> = layer.bias.iter().map(|b| -b).collect();
        z.add_row_vector(&neg_bias);
        z = z.matmul_t(&layer.weight_inv).expect("square layers");
    }
    z
}

fn by_blocks(m: &Matrix, exec: Exec, f: impl Fn(&Matrix) -> Matrix + Sync + Send) -> Matrix {
    let ranges = blocks(m.rows(), ROW_BLOCK);
    let parts = exec.map(ranges.len(), |b| f(&m.slice_rows(ranges[b].0, ranges[b].1)));
    if parts.is_empty() {
        return Matrix::zeros(0, m.cols());
    }
    Matrix::vstack(&parts).expect("equal widths")
}

pub fn mix_forward(net: &MixingNetwork, z: &Matrix, exec: Exec) -> Result<Matrix> {
    if z.cols() != net.dim() {
        return Err(Error::Dimension(format!("{} input columns for a {}-dimensional mixing", z.cols(), net.dim())));
    }
    Ok(by_blocks(z, exec, |b| forward_rows(net, b)))
}

pub fn mix_inverse(net: &MixingNetwork, x: &Matrix, exec: Exec) -> Result<Matrix> {
    if x.cols() != net.dim() {
        return Err(Error::Dimension(format!("{} input columns for a {}-dimensional mixing", x.cols(), net.dim())));
    }
    Ok(by_blocks(x, exec, |b| inverse_rows(net, b)))
}
