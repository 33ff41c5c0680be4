use std::path::{Path, PathBuf};

use pdgmm::datagen::{default_component_count, RhoMode};
use pdgmm::pipeline::{Preset, Stage1Config, Stage2Arch, Stage2Config};
use pdgmm::RngStream;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUT_ENV: &str = "PDGMM_OUT";

/// Dedicated stream of each randomized step, per seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Dag = 1,
    Mask = 2,
    Mixing = 3,
    Data = 4,
    Eval = 5,
    Stage1 = 6,
    Stage2 = 7,
}

impl Stream {
    pub fn rng(self, seed: u64) -> RngStream {
        RngStream::new(seed, self as u64)
    }
}

/// Everything that determines one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub rho: RhoMode,
    pub delta: f64,
    pub theta: f64,
    /// Number of mixture components.
    pub components: usize,
    pub samples: usize,
    pub eval_samples: usize,
    pub seed: u64,
    pub preset: Preset,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let n = match preset {
            Preset::Desk => 5,
            Preset::Paper => 10,
        };
        let rho = RhoMode::Half;
        let stage1 = Stage1Config::preset(preset);
        let samples = match preset {
            Preset::Desk => 61_440,
            Preset::Paper => 200 * stage1.batch_size,
        };
        Self {
            n,
            k: 1,
            m: 10,
            rho,
            delta: 0.0,
            theta: 0.0,
            components: default_component_count(n, rho),
            samples,
            eval_samples: 20_000,
            seed: 0,
            preset,
            stage1,
            stage2: Stage2Config::preset(preset),
        }
    }

    /// Sets `n` and `ρ` and resets the component count to its default for them.
    pub fn set_shape(&mut self, n: usize, rho: RhoMode) {
        self.n = n;
        self.rho = rho;
        self.components = default_component_count(n, rho);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.k >= self.n {
            return bad(format!("an ER-{} graph needs more than {} nodes", self.k, self.n));
        }
        if self.m < 1 {
            return bad("the mixing network needs at least one layer".into());
        }
        if !self.delta.is_finite() || !self.theta.is_finite() {
            return bad("delta and theta must be finite".into());
        }
        let max_j = pdgmm::datagen::binomial(self.n, self.rho.support_size(self.n));
        if self.components == 0 || self.components > max_j {
            return bad(format!("{} components requested, between 1 and {max_j} possible", self.components));
        }
        if self.samples <= self.n + 1 {
            return bad(format!("{} training samples is too few", self.samples));
        }
        if self.eval_samples <= self.n + 1 {
            return bad(format!("{} evaluation samples is too few for R²", self.eval_samples));
        }
        let positive = |v: f64| v > 0.0;
        if ![self.stage2.epsilon, self.stage1.lr, self.stage2.lr].into_iter().all(positive) {
            return bad("learning rates and epsilon must be positive".into());
        }
        Ok(())
    }

    /// Hash of everything the generated data depends on.
    pub fn data_hash(&self) -> String {
        let v = serde_json::json!({
            "n": self.n, "k": self.k, "m": self.m, "rho": self.rho, "delta": self.delta,
            "theta": self.theta, "components": self.components, "samples": self.samples, "seed": self.seed,
        });
        sha256_hex(&v.to_string())
    }

    /// Hash of the data plus the stage-1 configuration.
    pub fn stage1_hash(&self) -> String {
        let v = serde_json::json!({ "data": self.data_hash(), "stage1": self.stage1 });
        sha256_hex(&v.to_string())
    }

    pub fn stage2_hash(&self) -> String {
        let v = serde_json::json!({ "stage1": self.stage1_hash(), "stage2": self.stage2 });
        sha256_hex(&v.to_string())
    }

    /// Hash of the whole configuration, including the evaluation sample size.
    pub fn full_hash(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("config serializes"))
    }

    pub fn layout(&self, root: &Path) -> Layout {
        let data = root.join(format!("data-{}", &self.data_hash()[..16]));
        let stage1 = data.join(format!("s1-{}", &self.stage1_hash()[..16]));
        let stage2 = stage1.join(format!("s2-{}", &self.stage2_hash()[..16]));
        Layout { data, stage1, stage2 }
    }
}

pub fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Directories of one run: data, stage-1 artifacts below it, stage-2 artifacts below that.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub data: PathBuf,
    pub stage1: PathBuf,
    pub stage2: PathBuf,
}

impl Layout {
    pub fn dataset(&self) -> PathBuf {
        self.data.join("dataset.bin")
    }

    pub fn truth(&self) -> PathBuf {
        self.data.join("truth.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data.join("manifest.json")
    }

    pub fn checkpoint(&self, stage: u8) -> PathBuf {
        self.stage_dir(stage).join("model.ckpt")
    }

    pub fn partial_checkpoint(&self, stage: u8) -> PathBuf {
        self.stage_dir(stage).join("last-finite.ckpt")
    }

    pub fn log(&self, stage: u8) -> PathBuf {
        self.stage_dir(stage).join("train.jsonl")
    }

    pub fn stage_dir(&self, stage: u8) -> &Path {
        if stage == 1 { &self.stage1 } else { &self.stage2 }
    }

    /// Evaluation outputs go next to the deepest trained stage.
    pub fn eval_dir(&self, stage2: bool) -> &Path {
        if stage2 { &self.stage2 } else { &self.stage1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    K,
    M,
    Rho,
    Delta,
    Theta,
}

impl std::str::FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "n" => Axis::N,
            "k" => Axis::K,
            "m" => Axis::M,
            "rho" => Axis::Rho,
            "delta" => Axis::Delta,
            "theta" => Axis::Theta,
            _ => return Err(CliError::Config(format!("unknown grid axis {s:?}"))),
        })
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::N => "n",
            Axis::K => "k",
            Axis::M => "m",
            Axis::Rho => "rho",
            Axis::Delta => "delta",
            Axis::Theta => "theta",
        })
    }
}

impl Axis {
    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig, CliError> {
        let mut c = base.clone();
        let int = || value.parse::<usize>().map_err(|_| CliError::Config(format!("{self} value {value:?} is not an integer")));
        let float = || value.parse::<f64>().map_err(|_| CliError::Config(format!("{self} value {value:?} is not a number")));
        match self {
            Axis::N => c.set_shape(int()?, c.rho),
            Axis::K => c.k = int()?,
            Axis::M => c.m = int()?,
            Axis::Rho => {
                let rho = value.parse::<RhoMode>().map_err(|e| CliError::Config(e.to_string()))?;
                c.set_shape(c.n, rho);
            }
            Axis::Delta => c.delta = float()?,
            Axis::Theta => c.theta = float()?,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Stage-2 architecture override parsed from the command line.
pub fn parse_arch(s: &str) -> Result<Stage2Arch, CliError> {
    s.parse().map_err(|e: pdgmm::Error| CliError::Config(e.to_string()))
}
