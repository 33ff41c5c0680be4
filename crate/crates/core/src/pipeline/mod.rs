//! The two training stages.
//!
//! Stage 1 fits an autoencoder to the observations; its encoder recovers the latents up
//! to an affine map. Stage 2 fits a second autoencoder to the stage-1 representation
//! under a mean-L1 budget, which resolves the remaining affine ambiguity into a
//! permutation and scaling.

mod config;
mod store;

pub use config::{Preset, Stage1Config, Stage2Arch, Stage2Config};
pub use store::{partial_checkpoint, RunMeta};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::nn::{
    extra_adam_step, gaussian_prior, l1_gradient, l1_penalty, reconstruction, Adam, AdamConfig, Autoencoder,
    LagrangianState, Mlp, MlpSpec, Mode, NormKind,
};
use crate::numerics::{rank_from_singular_values, svd, Matrix, RngStream};

const SNAPSHOT_ROWS: usize = 256;

#[derive(Debug, Error)]
pub enum TrainError {
    /// Training produced a non-finite loss or gradient. `snapshot` holds the last
    /// parameters for which everything was finite.
    #[error("stage {stage} diverged at step {step}")]
    Diverged { stage: u8, step: usize, snapshot: Box<Autoencoder> },
    #[error(transparent)]
    Core(#[from] Error),
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub recon: f64,
    pub l1: f64,
    pub lambda_dual: f64,
}

pub fn write_log(records: &[LogRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Format { what: "training log", detail: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-column affine preprocessing `x ↦ (x − shift)·matrix`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputTransform {
    pub shift: Vec<f64>,
    pub matrix: Matrix,
}

impl InputTransform {
    pub fn identity(d: usize) -> Self {
        Self { shift: vec![0.0; d], matrix: Matrix::identity(d) }
    }

    /// Zero mean, unit population variance per column.
    pub fn standardize(x: &Matrix) -> Self {
        let shift = x.column_means();
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((v, &a), m) in var.iter_mut().zip(x.row(r)).zip(&shift) {
                *v += (a - m) * (a - m);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let s = (v / x.rows().max(1) as f64).sqrt();
                if s > 0.0 { 1.0 / s } else { 1.0 }
            })
            .collect();
        Self { shift, matrix: Matrix::from_diag(&scale) }
    }

    /// Symmetric (ZCA) whitening from the sample covariance; directions with
    /// negligible variance are dropped.
    pub fn whiten(x: &Matrix) -> Result<Self> {
        let shift = x.column_means();
        let d = svd(&x.covariance())?;
        let r = rank_from_singular_values(&d.s, 1e-12);
        let mut scaled = Matrix::zeros(x.cols(), x.cols());
        for i in 0..x.cols() {
            for j in 0..r {
                scaled[(i, j)] = d.v[(i, j)] / d.s[j].sqrt();
            }
        }
        Ok(Self { shift, matrix: scaled.matmul_t(&d.v)? })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut c = x.clone();
        let neg: Vec<f64> = self.shift.iter().map(|s| -s).collect();
        c.add_row_vector(&neg);
        c.matmul(&self.matrix)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Model {
    pub input: InputTransform,
    pub net: Autoencoder,
    pub log: Vec<LogRecord>,
    /// Eval-mode encoding of the first training rows, recorded at the end of training.
    pub snapshot: Matrix,
}

impl Stage1Model {
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.net.encoder.predict(&self.input.apply(x)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Model {
    pub input: InputTransform,
    pub net: Autoencoder,
    pub lambda_dual: f64,
    pub log: Vec<LogRecord>,
}

impl Stage2Model {
    /// Maps a stage-1 representation to the stage-2 representation.
    pub fn encode(&self, h: &Matrix) -> Result<Matrix> {
        self.net.encoder.predict(&self.input.apply(h)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub stage1: Stage1Model,
    pub stage2: Option<Stage2Model>,
}

impl TrainedModel {
    /// Eval-mode representation after `stage` (1 or 2).
    pub fn encode(&self, x: &Matrix, stage: u8) -> Result<Matrix> {
        let h = self.stage1.encode(x)?;
        match (stage, &self.stage2) {
            (1, _) => Ok(h),
            (2, Some(s2)) => s2.encode(&h),
            (2, None) => Err(Error::Parameter("stage-2 representation requested from a stage-1 model".into())),
            _ => Err(Error::Parameter(format!("no stage {stage}"))),
        }
    }
}

fn draw_batch(x: &Matrix, size: usize, rng: &mut RngStream) -> Matrix {
    let n = x.rows() as u64;
    let idx: Vec<usize> = (0..size).map(|_| rng.below(n) as usize).collect();
    x.select_rows(&idx)
}

fn all_finite(grads: &[Vec<f64>]) -> bool {
    grads.iter().flatten().all(|g| g.is_finite())
}

fn check_data(x: &Matrix, batch_size: usize) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite("training data".into()));
    }
    if x.rows() == 0 || batch_size < 2 {
        return Err(Error::Parameter(format!(
            "training needs data and a batch of at least 2 rows ({} rows, batch {batch_size})",
            x.rows()
        )));
    }
    Ok(())
}

/// Reconstruction autoencoder with a Gaussian prior penalty on the code.
pub fn run_stage1(x: &Matrix, latent_dim: usize, cfg: &Stage1Config, rng: &mut RngStream) -> Result<Stage1Model, TrainError> {
    check_data(x, cfg.batch_size)?;
    let d = x.cols();
    let input = InputTransform::standardize(x);
    let xs = input.apply(x)?;
    let family = rng.split();
    let mut init = family.stream(0);
    let mut batches = family.stream(1);
    let hidden: Vec<usize> = cfg.hidden.iter().map(|w| w * latent_dim).collect();
    let encoder = Mlp::new(
        MlpSpec {
            input: d,
            hidden: hidden.clone(),
            output: latent_dim,
            slope: cfg.slope,
            hidden_norm: true,
            output_norm: Some(NormKind::Full),
        },
        &mut init,
    );
    let decoder = Mlp::new(
        MlpSpec { input: latent_dim, hidden, output: d, slope: cfg.slope, hidden_norm: true, output_norm: None },
        &mut init,
    );
    let mut net = Autoencoder { encoder, decoder };
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &net);
    let mut log = Vec::new();
    for step in 0..cfg.iterations {
        let xb = draw_batch(&xs, cfg.batch_size, &mut batches);
        let (h, ce) = net.encoder.forward(&xb, Mode::Train)?;
        let (xr, cd) = net.decoder.forward(&h, Mode::Train)?;
        let (recon, g_rec) = reconstruction(&xr, &xb);
        let (prior, g_prior) = gaussian_prior(&h, cfg.beta);
        let diverged = |net: &Autoencoder| TrainError::Diverged { stage: 1, step, snapshot: Box::new(net.clone()) };
        if !(recon + prior).is_finite() {
            return Err(diverged(&net));
        }
        let (g_dec, dh) = net.decoder.backward(&cd, &g_rec)?;
        let (g_enc, _) = net.encoder.backward(&ce, &dh.add(&g_prior)?)?;
        let grads: Vec<Vec<f64>> = g_enc.into_iter().chain(g_dec).collect();
        if !all_finite(&grads) {
            return Err(diverged(&net));
        }
        net.encoder.commit(&ce);
        net.decoder.commit(&cd);
        adam.step(&mut net, &grads)?;
        if step % cfg.log_every.max(1) == 0 || step + 1 == cfg.iterations {
            log.push(LogRecord { step, recon, l1: l1_penalty(&h), lambda_dual: 0.0 });
        }
    }
    let head = xs.slice_rows(0, xs.rows().min(SNAPSHOT_ROWS));
    let snapshot = net.encoder.predict(&head)?;
    Ok(Stage1Model { input, net, log, snapshot })
}

/// Sparsity-constrained autoencoder on the frozen stage-1 representation, trained by
/// ExtraAdam on the Lagrangian with projected dual ascent on the multiplier.
pub fn run_stage2(stage1: &Stage1Model, x: &Matrix, cfg: &Stage2Config, rng: &mut RngStream) -> Result<Stage2Model, TrainError> {
    check_data(x, cfg.batch_size)?;
    let h = stage1.encode(x)?;
    let n = h.cols();
    let input = if cfg.whiten { InputTransform::whiten(&h)? } else { InputTransform::identity(n) };
    let ht = input.apply(&h)?;
    let family = rng.split();
    let mut init = family.stream(0);
    let mut batches = family.stream(1);
    let (hidden, hidden_norm) = match cfg.arch {
        Stage2Arch::Affine => (vec![], false),
        Stage2Arch::Mlp => (cfg.hidden.iter().map(|w| w * n).collect(), true),
    };
    let encoder = Mlp::new(
        MlpSpec {
            input: n,
            hidden: hidden.clone(),
            output: n,
            slope: cfg.slope,
            hidden_norm,
            output_norm: Some(NormKind::ScaleOnly),
        },
        &mut init,
    );
    let decoder =
        Mlp::new(MlpSpec { input: n, hidden, output: n, slope: cfg.slope, hidden_norm, output_norm: None }, &mut init);
    let mut net = Autoencoder { encoder, decoder };
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &net);
    let mut lag = LagrangianState::new(cfg.dual_lr, cfg.epsilon);
    let mut log = Vec::new();
    for step in 0..cfg.iterations {
        let xb = draw_batch(&ht, cfg.batch_size, &mut batches);
        let lambda = if cfg.sparsity { lag.lambda } else { 0.0 };
        let before = net.clone();
        let outcome = extra_adam_step(&mut adam, &mut net, |net| {
            let (code, ce) = net.encoder.forward(&xb, Mode::Train)?;
            let (xr, cd) = net.decoder.forward(&code, Mode::Train)?;
            let (recon, g_rec) = reconstruction(&xr, &xb);
            let l1 = l1_penalty(&code);
            if !(recon + lambda * l1).is_finite() {
                return Err(Error::NonFinite("stage-2 loss".into()));
            }
            let (g_dec, mut dh) = net.decoder.backward(&cd, &g_rec)?;
            if lambda > 0.0 {
                dh = dh.add(&l1_gradient(&code).scale(lambda))?;
            }
            let (g_enc, _) = net.encoder.backward(&ce, &dh)?;
            let grads: Vec<Vec<f64>> = g_enc.into_iter().chain(g_dec).collect();
            if !all_finite(&grads) {
                return Err(Error::NonFinite("stage-2 gradients".into()));
            }
            net.encoder.commit(&ce);
            net.decoder.commit(&cd);
            Ok((grads, (recon, l1)))
        });
        let ((recon, _), (_, l1_extra)) = match outcome {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                return Err(TrainError::Diverged { stage: 2, step, snapshot: Box::new(before) });
            }
            Err(e) => return Err(e.into()),
        };
        if cfg.sparsity {
            lag.step(l1_extra)?;
        }
        if step % cfg.log_every.max(1) == 0 || step + 1 == cfg.iterations {
            log.push(LogRecord { step, recon, l1: l1_extra, lambda_dual: lag.lambda });
        }
    }
    Ok(Stage2Model { input, net, lambda_dual: lag.lambda, log })
}

/// Mean L1 norm of the eval-mode stage-2 representation of `x`.
pub fn representation_l1(model: &TrainedModel, x: &Matrix) -> Result<f64> {
    Ok(l1_penalty(&model.encode(x, 2)?))
}
