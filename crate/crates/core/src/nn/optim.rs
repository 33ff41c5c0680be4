use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;

/// Anything exposing its learnable tensors in a fixed order.
pub trait Parameters {
    fn parameters(&self) -> Vec<&[f64]>;
    fn parameters_mut(&mut self) -> Vec<&mut [f64]>;

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.parameters().into_iter().map(|p| p.to_vec()).collect()
    }

    fn restore(&mut self, saved: &[Vec<f64>]) {
        for (p, s) in self.parameters_mut().into_iter().zip(saved) {
            p.copy_from_slice(s);
        }
    }
}

impl Parameters for Mlp {
    fn parameters(&self) -> Vec<&[f64]> {
        Mlp::parameters(self)
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        Mlp::parameters_mut(self)
    }
}

/// Encoder followed by decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Parameters for Autoencoder {
    fn parameters(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.parameters();
        p.extend(self.decoder.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.decoder.parameters_mut());
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &impl Parameters) -> Self {
        let shapes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
        Self {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn step(&mut self, model: &mut impl Parameters, grads: &[Vec<f64>]) -> Result<()> {
        let mut params = model.parameters_mut();
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::Dimension("gradients do not match parameter shapes".into()));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Extra-gradient step with Adam: a half-step from the current point, a fresh gradient
/// at the extrapolated point, then the real step from the original point with that
/// gradient. Both half-steps update the shared moments and the step count.
///
/// `grad_fn` returns gradients in parameter order plus any auxiliary value; the
/// auxiliaries of both evaluations are returned.
pub fn extra_adam_step<M, A>(
    adam: &mut Adam,
    model: &mut M,
    mut grad_fn: impl FnMut(&mut M) -> Result<(Vec<Vec<f64>>, A)>,
) -> Result<(A, A)>
where
    M: Parameters,
{
    let (g0, a0) = grad_fn(model)?;
    let saved = model.snapshot();
    adam.step(model, &g0)?;
    let (g1, a1) = grad_fn(model)?;
    model.restore(&saved);
    adam.step(model, &g1)?;
    Ok((a0, a1))
}

/// Projected dual ascent on one inequality constraint `c ≤ ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub lambda: f64,
    pub dual_lr: f64,
    pub epsilon: f64,
}

impl LagrangianState {
    pub fn new(dual_lr: f64, epsilon: f64) -> Self {
        Self { lambda: 0.0, dual_lr, epsilon }
    }

    /// `λ ← max(0, λ + η(c − ε))`.
    pub fn step(&mut self, constraint_value: f64) -> Result<f64> {
        if !constraint_value.is_finite() {
            return Err(Error::NonFinite("constraint value".into()));
        }
        self.lambda = (self.lambda + self.dual_lr * (constraint_value - self.epsilon)).max(0.0);
        Ok(self.lambda)
    }

    /// `λ(c − ε)`, the term added to the primal loss.
    pub fn penalty(&self, constraint_value: f64) -> f64 {
        self.lambda * (constraint_value - self.epsilon)
    }
}
