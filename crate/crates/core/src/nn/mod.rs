//! Multilayer perceptrons with batch normalization, hand-written reverse mode,
//! Adam, ExtraAdam and projected dual ascent.

mod checkpoint;
mod loss;
mod mlp;
mod optim;

pub use checkpoint::{Checkpoint, Manifest, TensorEntry};
pub use loss::{gaussian_prior, l1_gradient, l1_penalty, reconstruction};
pub use mlp::{BatchNorm, Cache, Dense, Mlp, MlpSpec, Mode, NormKind, BN_EPS, BN_MOMENTUM};
pub use optim::{extra_adam_step, Adam, AdamConfig, Autoencoder, LagrangianState, Parameters};
