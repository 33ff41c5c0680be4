//! Recovery of latent variables distributed as a potentially degenerate Gaussian mixture
//! and observed through an invertible piecewise-affine map.
//!
//! * [`numerics`]: matrices, SVD, pseudo-inverse, assignment, least squares, random streams.
//! * [`pdgmm`]: mixture algebra and assumption checkers.
//! * [`datagen`]: synthetic benchmark (random DAG, linear SCM, masking, mixing network).
//! * [`nn`]: multilayer perceptrons with batch normalization, Adam and ExtraAdam.
//! * [`pipeline`]: the two training stages.
//! * [`metrics`]: R², Pearson correlations and MCC.

pub mod error;
pub mod exec;
pub mod nn;
pub mod numerics;
pub mod datagen;
pub mod pdgmm;
pub mod pipeline;
pub mod metrics;

pub use error::{Error, Result};
pub use exec::Exec;
pub use numerics::{Matrix, RngStream};
