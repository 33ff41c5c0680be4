use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Named hyperparameter set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small budget that trains in minutes on a laptop.
    #[default]
    Desk,
    /// Full-scale budget: large batches and long schedules.
    Paper,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Parameter(format!("unknown preset {s:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    /// Hidden widths as multiples of the latent dimension.
    pub hidden: Vec<usize>,
    pub slope: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub beta: f64,
    pub log_every: usize,
}

impl Stage1Config {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self {
                hidden: vec![50, 100, 100, 50],
                slope: 0.5,
                batch_size: 512,
                iterations: 2000,
                lr: 1e-3,
                beta: 1.0,
                log_every: 100,
            },
            Preset::Paper => Self {
                hidden: vec![50, 100, 100, 50],
                slope: 0.5,
                batch_size: 6144,
                iterations: 5000,
                lr: 1e-4,
                beta: 1.0,
                log_every: 100,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage2Arch {
    /// Linear encoder and decoder.
    #[default]
    Affine,
    /// Batch-normalized leaky-ReLU networks.
    Mlp,
}

impl fmt::Display for Stage2Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage2Arch::Affine => "affine",
            Stage2Arch::Mlp => "mlp",
        })
    }
}

impl FromStr for Stage2Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "affine" => Ok(Stage2Arch::Affine),
            "mlp" => Ok(Stage2Arch::Mlp),
            _ => Err(Error::Parameter(format!("unknown stage-2 architecture {s:?} (expected affine or mlp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub arch: Stage2Arch,
    /// Hidden widths as multiples of the latent dimension; ignored for the affine arch.
    pub hidden: Vec<usize>,
    pub slope: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub dual_lr: f64,
    pub epsilon: f64,
    /// Without it the multiplier stays at zero and only reconstruction is trained.
    pub sparsity: bool,
    pub whiten: bool,
    pub log_every: usize,
}

impl Stage2Config {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self {
                arch: Stage2Arch::Affine,
                hidden: vec![10, 50, 50, 50, 50, 10],
                slope: 0.5,
                batch_size: 512,
                iterations: 20_000,
                lr: 3e-3,
                dual_lr: 1e-3,
                epsilon: 0.01,
                sparsity: true,
                whiten: true,
                log_every: 500,
            },
            Preset::Paper => Self {
                arch: Stage2Arch::Mlp,
                hidden: vec![10, 50, 50, 50, 50, 10],
                slope: 0.5,
                batch_size: 6144,
                iterations: 80_000,
                lr: 1e-4,
                dual_lr: 5e-5,
                epsilon: 0.01,
                sparsity: true,
                whiten: true,
                log_every: 500,
            },
        }
    }
}
