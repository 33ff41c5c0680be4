use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm_into, Matrix, RngStream};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Learnable part of a batch-normalization layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    /// Scale `γ` and shift `β`.
    Full,
    /// Scale `γ` only.
    ScaleOnly,
    /// Standardization without parameters.
    Plain,
}

/// Layer layout of a multilayer perceptron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    /// Leaky-ReLU negative slope of the hidden layers.
    pub slope: f64,
    /// Full batch normalization after every hidden affine map.
    pub hidden_norm: bool,
    /// Optional batch normalization after the final affine map.
    pub output_norm: Option<NormKind>,
}

impl MlpSpec {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.output);
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics are updated by [`Mlp::commit`].
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub kind: NormKind,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(kind: NormKind, width: usize) -> Self {
        Self {
            kind,
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    fn has_gamma(&self) -> bool {
        self.kind != NormKind::Plain
    }

    fn has_beta(&self) -> bool {
        self.kind == NormKind::Full
    }

    fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, BnCache)> {
        let (rows, width) = x.shape();
        let (mean, var, from_batch) = match mode {
            Mode::Train => {
                if rows < 2 {
                    return Err(Error::Parameter("batch normalization in training mode needs at least 2 rows".into()));
                }
                let mean = x.column_means();
                let mut var = vec![0.0; width];
                for r in 0..rows {
                    for ((v, &xv), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *v += (xv - m) * (xv - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                (mean, var, true)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone(), false),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = Matrix::zeros(rows, width);
        for r in 0..rows {
            let xr = xhat.row_mut(r);
            for c in 0..width {
                xr[c] = (xr[c] - mean[c]) * inv_std[c];
            }
            let yr = y.row_mut(r);
            for c in 0..width {
                yr[c] = self.gamma[c] * xr[c] + self.beta[c];
            }
        }
        Ok((y, BnCache { xhat, inv_std, mean, var, from_batch }))
    }

    fn commit(&mut self, cache: &BnCache, rows: usize) {
        if !cache.from_batch {
            return;
        }
        let unbiased = rows as f64 / (rows as f64 - 1.0);
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * cache.mean[c];
            self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * cache.var[c] * unbiased;
        }
    }

    /// Returns `(dx, dγ, dβ)`.
    fn backward(&self, cache: &BnCache, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let (rows, width) = dy.shape();
        let mut dgamma = vec![0.0; width];
        let mut dbeta = vec![0.0; width];
        for r in 0..rows {
            for ((c, &g), &xh) in dy.row(r).iter().enumerate().zip(cache.xhat.row(r)) {
                dgamma[c] += g * xh;
                dbeta[c] += g;
            }
        }
        let mut dx = Matrix::zeros(rows, width);
        if cache.from_batch {
            // dxhat = dy·γ; dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
            let sum_dxhat: Vec<f64> = (0..width).map(|c| dbeta[c] * self.gamma[c]).collect();
            let sum_dxhat_xhat: Vec<f64> = (0..width).map(|c| dgamma[c] * self.gamma[c]).collect();
            let nf = rows as f64;
            for r in 0..rows {
                let (dyr, xhr) = (dy.row(r), cache.xhat.row(r));
                let out = dx.row_mut(r);
                for c in 0..width {
                    let dxhat = dyr[c] * self.gamma[c];
                    out[c] = cache.inv_std[c] / nf * (nf * dxhat - sum_dxhat[c] - xhr[c] * sum_dxhat_xhat[c]);
                }
            }
        } else {
            for r in 0..rows {
                let dyr = dy.row(r);
                let out = dx.row_mut(r);
                for c in 0..width {
                    out[c] = dyr[c] * self.gamma[c] * cache.inv_std[c];
                }
            }
        }
        (dx, dgamma, dbeta)
    }
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    from_batch: bool,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Matrix,
    bn: Option<BnCache>,
    /// Input of the activation (hidden layers only).
    pre_act: Option<Matrix>,
}

/// Intermediates of one forward pass, consumed by [`Mlp::backward`] and [`Mlp::commit`].
#[derive(Clone, Debug)]
pub struct Cache {
    layers: Vec<LayerCache>,
    rows: usize,
}

/// Multilayer perceptron: affine → batch norm → leaky-ReLU per hidden layer, then an
/// affine output layer with optional batch norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    dense: Vec<Dense>,
    /// One per layer; `None` where the layer is not normalized.
    norms: Vec<Option<BatchNorm>>,
}

impl Mlp {
    /// Weights `N(0, 2/fan_in)`, zero biases, `γ = 1`, `β = 0`.
    pub fn new(spec: MlpSpec, rng: &mut RngStream) -> Self {
        let widths = spec.widths();
        let depth = widths.len() - 1;
        let mut dense = Vec::with_capacity(depth);
        let mut norms = Vec::with_capacity(depth);
        for l in 0..depth {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let std = (2.0 / fan_in.max(1) as f64).sqrt();
            let weight = Matrix::from_fn(fan_out, fan_in, |_, _| std * rng.normal());
            dense.push(Dense { weight, bias: vec![0.0; fan_out] });
            let kind = if l + 1 < depth { spec.hidden_norm.then_some(NormKind::Full) } else { spec.output_norm };
            norms.push(kind.map(|k| BatchNorm::new(k, fan_out)));
        }
        Self { spec, dense, norms }
    }

    /// Single affine layer `x ↦ W x + b` with no normalization.
    pub fn affine(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Dimension(format!("bias of length {} for {} outputs", bias.len(), weight.rows())));
        }
        let spec = MlpSpec {
            input: weight.cols(),
            hidden: vec![],
            output: weight.rows(),
            slope: 1.0,
            hidden_norm: false,
            output_norm: None,
        };
        Ok(Self { spec, dense: vec![Dense { weight, bias }], norms: vec![None] })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.dense
    }

    pub fn norms(&self) -> &[Option<BatchNorm>] {
        &self.norms
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, Cache)> {
        if x.cols() != self.spec.input {
            return Err(Error::Dimension(format!("input width {} for a network expecting {}", x.cols(), self.spec.input)));
        }
        let depth = self.dense.len();
        let mut caches = Vec::with_capacity(depth);
        let mut h = x.clone();
        for l in 0..depth {
            let d = &self.dense[l];
            let mut z = Matrix::zeros(h.rows(), d.weight.rows());
            for r in 0..z.rows() {
                z.row_mut(r).copy_from_slice(&d.bias);
            }
            gemm_into(&h, false, &d.weight, true, 1.0, &mut z);
            let input = std::mem::replace(&mut h, Matrix::zeros(0, 0));
            let (z, bn) = match &self.norms[l] {
                Some(bn) => {
                    let (y, c) = bn.forward(&z, mode)?;
                    (y, Some(c))
                }
                None => (z, None),
            };
            if l + 1 < depth {
                let slope = self.spec.slope;
                h = z.map(|v| if v > 0.0 { v } else { slope * v });
                caches.push(LayerCache { input, bn, pre_act: Some(z) });
            } else {
                h = z;
                caches.push(LayerCache { input, bn, pre_act: None });
            }
        }
        Ok((h, Cache { layers: caches, rows: x.rows() }))
    }

    /// Eval-mode output only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x, Mode::Eval)?.0)
    }

    /// Folds the batch statistics of a train-mode pass into the running statistics.
    pub fn commit(&mut self, cache: &Cache) {
        for (bn, lc) in self.norms.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(c)) = (bn.as_mut(), lc.bn.as_ref()) {
                bn.commit(c, cache.rows);
            }
        }
    }

    /// Train-mode forward that also updates running statistics.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<(Matrix, Cache)> {
        let (y, cache) = self.forward(x, Mode::Train)?;
        self.commit(&cache);
        Ok((y, cache))
    }

    /// Gradients in [`Mlp::parameters`] order, plus the gradient with respect to the input.
    pub fn backward(&self, cache: &Cache, grad_out: &Matrix) -> Result<(Vec<Vec<f64>>, Matrix)> {
        if cache.layers.len() != self.dense.len()
            || grad_out.shape() != (cache.rows, self.spec.output)
        {
            return Err(Error::Dimension(format!(
                "gradient of shape {:?} does not match the cached forward pass",
                grad_out.shape()
            )));
        }
        let depth = self.dense.len();
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); depth];
        let mut g = grad_out.clone();
        for l in (0..depth).rev() {
            let lc = &cache.layers[l];
            if let Some(pre) = &lc.pre_act {
                let slope = self.spec.slope;
                for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
                    if p <= 0.0 {
                        *gv *= slope;
                    }
                }
            }
            let mut norm_grads = Vec::new();
            if let (Some(bn), Some(c)) = (&self.norms[l], &lc.bn) {
                let (dx, dgamma, dbeta) = bn.backward(c, &g);
                if bn.has_gamma() {
                    norm_grads.push(dgamma);
                }
                if bn.has_beta() {
                    norm_grads.push(dbeta);
                }
                g = dx;
            }
            let d = &self.dense[l];
            let mut dw = Matrix::zeros(d.weight.rows(), d.weight.cols());
            gemm_into(&g, true, &lc.input, false, 0.0, &mut dw);
            let mut db = vec![0.0; d.bias.len()];
            for r in 0..g.rows() {
                for (b, &v) in db.iter_mut().zip(g.row(r)) {
                    *b += v;
                }
            }
            let mut dx = Matrix::zeros(g.rows(), d.weight.cols());
            gemm_into(&g, false, &d.weight, false, 0.0, &mut dx);
            let mut grads = vec![dw.into_data(), db];
            grads.extend(norm_grads);
            per_layer[l] = grads;
            g = dx;
        }
        Ok((per_layer.into_iter().flatten().collect(), g))
    }

    /// Learnable tensors: per layer weight, bias, then `γ` and `β` where present.
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (d, bn) in self.dense.iter().zip(&self.norms) {
            out.push(d.weight.data());
            out.push(d.bias.as_slice());
            if let Some(bn) = bn {
                if bn.has_gamma() {
                    out.push(bn.gamma.as_slice());
                }
                if bn.has_beta() {
                    out.push(bn.beta.as_slice());
                }
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (d, bn) in self.dense.iter_mut().zip(self.norms.iter_mut()) {
            out.push(d.weight.data_mut());
            out.push(d.bias.as_mut_slice());
            if let Some(bn) = bn {
                let (has_gamma, has_beta) = (bn.has_gamma(), bn.has_beta());
                if has_gamma {
                    out.push(bn.gamma.as_mut_slice());
                }
                if has_beta {
                    out.push(bn.beta.as_mut_slice());
                }
            }
        }
        out
    }

    /// Every tensor needed to restore the network, learnable or not, with names.
    pub fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (l, (d, bn)) in self.dense.iter().zip(&self.norms).enumerate() {
            out.push((format!("layer{l}.weight"), d.weight.data()));
            out.push((format!("layer{l}.bias"), &d.bias));
            if let Some(bn) = bn {
                out.push((format!("layer{l}.norm.gamma"), &bn.gamma));
                out.push((format!("layer{l}.norm.beta"), &bn.beta));
                out.push((format!("layer{l}.norm.running_mean"), &bn.running_mean));
                out.push((format!("layer{l}.norm.running_var"), &bn.running_var));
            }
        }
        out
    }

    /// Inverse of [`Mlp::named_tensors`]: consumes tensors in the same order.
    pub fn from_tensors(spec: MlpSpec, tensors: &mut impl Iterator<Item = Vec<f64>>) -> Result<Self> {
        let mut next = |len: usize| -> Result<Vec<f64>> {
            let t = tensors.next().ok_or(Error::Format { what: "network tensors", detail: "too few tensors".into() })?;
            if t.len() != len {
                return Err(Error::Format {
                    what: "network tensors",
                    detail: format!("tensor of length {} where {len} was expected", t.len()),
                });
            }
            Ok(t)
        };
        let mut mlp = Mlp::new(spec, &mut RngStream::new(0, 0));
        for (d, bn) in mlp.dense.iter_mut().zip(mlp.norms.iter_mut()) {
            let (rows, cols) = d.weight.shape();
            d.weight = Matrix::from_vec(rows, cols, next(rows * cols)?)?;
            d.bias = next(rows)?;
            if let Some(bn) = bn {
                bn.gamma = next(rows)?;
                bn.beta = next(rows)?;
                bn.running_mean = next(rows)?;
                bn.running_var = next(rows)?;
                if bn.running_var.iter().any(|&v| v < 0.0) {
                    return Err(Error::Format { what: "network tensors", detail: "negative running variance".into() });
                }
            }
        }
        Ok(mlp)
    }
}
