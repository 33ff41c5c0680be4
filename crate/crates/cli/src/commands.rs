use std::fs;
use std::path::{Path, PathBuf};

use pdgmm::datagen::{
    build_mask_spec, build_mixing, induced_mixture, latent_dataset, mix_forward, mix_inverse, sample_er_dag, Dataset,
    MaskSpec, MixingNetwork, MixingOptions, ScmSpec,
};
use pdgmm::metrics::{mcc, r2_score, write_correlation_csv, write_csv, MetricsReport};
use pdgmm::nn::Checkpoint;
use pdgmm::pdgmm::{check_sufficient_variability, Variability};
use pdgmm::pipeline::{
    partial_checkpoint, run_stage1, run_stage2, write_log, RunMeta, Stage1Model, Stage2Model, TrainError,
    TrainedModel,
};
use pdgmm::{Exec, Matrix};
use serde_json::json;

use crate::config::{ExperimentConfig, Layout, Stream};
use crate::error::{io_err, CliError};

/// The fixed generative objects of one seed.
pub struct World {
    pub scm: ScmSpec,
    pub mask: MaskSpec,
    pub mixing: MixingNetwork,
}

pub fn build_world(cfg: &ExperimentConfig) -> Result<World, CliError> {
    cfg.validate()?;
    let scm = sample_er_dag(cfg.n, cfg.k, &mut Stream::Dag.rng(cfg.seed))?;
    let mask = build_mask_spec(
        cfg.n,
        cfg.components,
        cfg.rho,
        cfg.delta,
        cfg.theta,
        &scm.mean(),
        &scm.std(),
        &mut Stream::Mask.rng(cfg.seed),
    )?;
    let mixing = build_mixing(cfg.n, cfg.n, cfg.m, &MixingOptions::default(), &mut Stream::Mixing.rng(cfg.seed))?;
    Ok(World { scm, mask, mixing })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a temporary file so readers never see a partial file.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<(), CliError>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let tmp = temp_path(path);
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, |tmp| fs::write(tmp, bytes).map_err(io_err(tmp)))
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json value serializes");
    s.push(b'\n');
    s
}

fn run_meta(cfg: &ExperimentConfig, hash: String) -> RunMeta {
    let streams: serde_json::Map<String, serde_json::Value> = [
        ("dag", Stream::Dag),
        ("mask", Stream::Mask),
        ("mixing", Stream::Mixing),
        ("data", Stream::Data),
        ("eval", Stream::Eval),
        ("stage1", Stream::Stage1),
        ("stage2", Stream::Stage2),
    ]
    .into_iter()
    .map(|(k, s)| (k.to_string(), json!(s as u64)))
    .collect();
    RunMeta { seeds: json!({ "seed": cfg.seed, "streams": streams }), config_hash: hash }
}

/// Draws the training set and writes it with the true mixture and a manifest.
pub fn generate(cfg: &ExperimentConfig, root: &Path, exec: Exec) -> Result<Layout, CliError> {
    let world = build_world(cfg)?;
    let layout = cfg.layout(root);
    let latent = latent_dataset(&world.scm, &world.mask, cfg.samples, &mut Stream::Data.rng(cfg.seed), exec)?;
    let x = mix_forward(&world.mixing, &latent.z, exec)?;
    let dataset = Dataset::new(latent.z, x, latent.labels, cfg.seed, cfg.data_hash())?;
    write_atomic(&layout.dataset(), |tmp| Ok(dataset.save(tmp)?))?;
    write_bytes(&layout.truth(), latent.truth.to_json().as_bytes())?;
    let variability = match check_sufficient_variability(&world.mask.index_sets, cfg.n) {
        Variability::Sufficient => json!("sufficient"),
        Variability::Violated { coordinate } => json!({ "violated": coordinate }),
    };
    let manifest = json!({
        "config-hash": cfg.data_hash(),
        "config": cfg,
        "edges": world.scm.edge_count(),
        "components": world.mask.num_components(),
        "sufficient_variability": variability,
        "files": { "dataset": "dataset.bin", "truth": "truth.json" },
    });
    write_bytes(&layout.manifest(), &pretty(&manifest))?;
    Ok(layout)
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing { path: path.to_path_buf(), what: what.into() })
    }
}

fn load_dataset(cfg: &ExperimentConfig, layout: &Layout) -> Result<Dataset, CliError> {
    let path = layout.dataset();
    require(&path, "dataset; run generate first")?;
    let ds = Dataset::load(&path)?;
    if ds.header.config_hash != cfg.data_hash() {
        return Err(CliError::HashMismatch { path, found: ds.header.config_hash, expected: cfg.data_hash() });
    }
    Ok(ds)
}

fn load_checkpoint(path: PathBuf, expected: String, what: &str) -> Result<Checkpoint, CliError> {
    require(&path, what)?;
    let c = Checkpoint::load(&path)?;
    if c.manifest.config_hash != expected {
        return Err(CliError::HashMismatch { path, found: c.manifest.config_hash, expected });
    }
    Ok(c)
}

fn load_stage1(cfg: &ExperimentConfig, layout: &Layout) -> Result<Stage1Model, CliError> {
    let c = load_checkpoint(layout.checkpoint(1), cfg.stage1_hash(), "stage-1 checkpoint; run train --stage 1 first")?;
    Ok(Stage1Model::from_checkpoint(&c)?)
}

fn load_stage2(cfg: &ExperimentConfig, layout: &Layout) -> Result<Stage2Model, CliError> {
    let c = load_checkpoint(layout.checkpoint(2), cfg.stage2_hash(), "stage-2 checkpoint; run train --stage 2 first")?;
    Ok(Stage2Model::from_checkpoint(&c)?)
}

fn save_log(path: &Path, log: &[pdgmm::pipeline::LogRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_log(log, &mut buf)?;
    write_bytes(path, &buf)
}

fn diverged(
    cfg: &ExperimentConfig,
    layout: &Layout,
    stage: u8,
    hash: String,
    step: usize,
    snapshot: &pdgmm::nn::Autoencoder,
) -> CliError {
    let path = layout.partial_checkpoint(stage);
    let c = partial_checkpoint(stage, snapshot, step, &run_meta(cfg, hash));
    match write_atomic(&path, |tmp| Ok(c.save(tmp)?)) {
        Ok(()) => CliError::Diverged { stage, step, saved: path },
        Err(e) => e,
    }
}

/// Trains `stage` (1 or 2) and writes its checkpoint and log.
pub fn train(cfg: &ExperimentConfig, root: &Path, stage: u8) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let layout = cfg.layout(root);
    let ds = load_dataset(cfg, &layout)?;
    match stage {
        1 => {
            let hash = cfg.stage1_hash();
            let model = match run_stage1(&ds.x, cfg.n, &cfg.stage1, &mut Stream::Stage1.rng(cfg.seed)) {
                Ok(m) => m,
                Err(TrainError::Diverged { step, snapshot, .. }) => {
                    return Err(diverged(cfg, &layout, 1, hash, step, &snapshot))
                }
                Err(TrainError::Core(e)) => return Err(e.into()),
            };
            let c = model.to_checkpoint(&run_meta(cfg, hash));
            save_log(&layout.log(1), &model.log)?;
            write_atomic(&layout.checkpoint(1), |tmp| Ok(c.save(tmp)?))?;
            Ok(layout.checkpoint(1))
        }
        2 => {
            let s1 = load_stage1(cfg, &layout)?;
            let hash = cfg.stage2_hash();
            let model = match run_stage2(&s1, &ds.x, &cfg.stage2, &mut Stream::Stage2.rng(cfg.seed)) {
                Ok(m) => m,
                Err(TrainError::Diverged { step, snapshot, .. }) => {
                    return Err(diverged(cfg, &layout, 2, hash, step, &snapshot))
                }
                Err(TrainError::Core(e)) => return Err(e.into()),
            };
            let c = model.to_checkpoint(&run_meta(cfg, hash));
            save_log(&layout.log(2), &model.log)?;
            write_atomic(&layout.checkpoint(2), |tmp| Ok(c.save(tmp)?))?;
            Ok(layout.checkpoint(2))
        }
        s => Err(CliError::Config(format!("stage must be 1 or 2, got {s}"))),
    }
}

/// Loads the trained model; stage 2 is included when its checkpoint exists.
pub fn load_model(cfg: &ExperimentConfig, root: &Path) -> Result<TrainedModel, CliError> {
    let layout = cfg.layout(root);
    let stage1 = load_stage1(cfg, &layout)?;
    let stage2 = if layout.checkpoint(2).exists() { Some(load_stage2(cfg, &layout)?) } else { None };
    Ok(TrainedModel { stage1, stage2 })
}

/// Fresh samples from the evaluation stream: `(Z, X)`.
pub fn evaluation_sample(cfg: &ExperimentConfig, world: &World, exec: Exec) -> Result<(Matrix, Matrix), CliError> {
    let latent = latent_dataset(&world.scm, &world.mask, cfg.eval_samples, &mut Stream::Eval.rng(cfg.seed), exec)?;
    let x = mix_forward(&world.mixing, &latent.z, exec)?;
    Ok((latent.z, x))
}

/// A fixed permutation and rescaling of the coordinates: reversed order, column `i`
/// scaled by `i + 1`.
pub fn permute_scale(z: &Matrix) -> Matrix {
    let n = z.cols();
    Matrix::from_fn(z.rows(), n, |r, i| (i + 1) as f64 * z[(r, n - 1 - i)])
}

/// Scores the trained representation on a fresh sample. With `oracle` the learned
/// encoder is replaced by the exact inverse of the mixing followed by
/// [`permute_scale`], and no checkpoints are needed.
pub fn evaluate(cfg: &ExperimentConfig, root: &Path, oracle: bool, exec: Exec) -> Result<MetricsReport, CliError> {
    let world = build_world(cfg)?;
    let layout = cfg.layout(root);
    let (z, x) = evaluation_sample(cfg, &world, exec)?;
    let (h1, h2, dir) = if oracle {
        let h = permute_scale(&mix_inverse(&world.mixing, &x, exec)?);
        (h.clone(), Some(h), layout.data.join("oracle"))
    } else {
        let model = load_model(cfg, root)?;
        let h1 = model.encode(&x, 1)?;
        let h2 = if model.stage2.is_some() { Some(model.encode(&x, 2)?) } else { None };
        let dir = layout.eval_dir(h2.is_some()).to_path_buf();
        (h1, h2, dir)
    };
    let r2 = r2_score(&h1, &z, exec)?;
    let m1 = mcc(&h1, &z, exec)?;
    let m2 = h2.as_ref().map(|h| mcc(h, &z, exec)).transpose()?;
    let mut flags = Vec::new();
    if !r2.degenerate.is_empty() {
        flags.push(format!("constant latents {:?}", r2.degenerate));
    }
    if m1.correlation.degenerate || m2.as_ref().is_some_and(|m| m.correlation.degenerate) {
        flags.push("zero-variance representation coordinate".into());
    }
    let report = MetricsReport {
        n: cfg.n,
        k: cfg.k,
        m: cfg.m,
        rho: cfg.rho.to_string(),
        delta: cfg.delta,
        theta: cfg.theta,
        seed: cfg.seed,
        r2_stage1: r2.mean,
        mcc_stage1: m1.value,
        mcc_stage2: m2.as_ref().map(|m| m.value),
        flags,
    };
    let mut csv = Vec::new();
    write_csv(std::slice::from_ref(&report), &mut csv)?;
    write_bytes(&dir.join("metrics.csv"), &csv)?;
    let mut grid = Vec::new();
    write_correlation_csv(&m1.correlation.matrix, &mut grid)?;
    write_bytes(&dir.join("corr-stage1.csv"), &grid)?;
    if let Some(m2) = &m2 {
        let mut grid = Vec::new();
        write_correlation_csv(&m2.correlation.matrix, &mut grid)?;
        write_bytes(&dir.join("corr-stage2.csv"), &grid)?;
    }
    let meta = json!({
        "config-hash": cfg.full_hash(),
        "data-hash": cfg.data_hash(),
        "stage1-hash": cfg.stage1_hash(),
        "stage2-hash": if m2.is_some() { json!(cfg.stage2_hash()) } else { json!(null) },
        "oracle": oracle,
        "report": report,
        "r2_per_latent": r2.per_latent,
        "assignment_stage1": m1.assignment,
        "assignment_stage2": m2.as_ref().map(|m| m.assignment.clone()),
    });
    write_bytes(&dir.join("metrics.json"), &pretty(&meta))?;
    Ok(report)
}

fn stage_is_current(path: &Path, hash: &str) -> bool {
    Checkpoint::load(path).is_ok_and(|c| c.manifest.config_hash == hash)
}

/// Generate, train both stages and evaluate, reusing any artifact already on disk whose
/// hash matches.
pub fn run_all(cfg: &ExperimentConfig, root: &Path, exec: Exec) -> Result<MetricsReport, CliError> {
    cfg.validate()?;
    let layout = cfg.layout(root);
    let data_ok = Dataset::load(&layout.dataset()).is_ok_and(|d| d.header.config_hash == cfg.data_hash());
    if !data_ok {
        generate(cfg, root, exec)?;
    }
    if !stage_is_current(&layout.checkpoint(1), &cfg.stage1_hash()) {
        train(cfg, root, 1)?;
    }
    if !stage_is_current(&layout.checkpoint(2), &cfg.stage2_hash()) {
        train(cfg, root, 2)?;
    }
    evaluate(cfg, root, false, exec)
}

pub fn induced_truth(cfg: &ExperimentConfig) -> Result<pdgmm::pdgmm::PdGmm, CliError> {
    let w = build_world(cfg)?;
    Ok(induced_mixture(&w.scm, &w.mask)?)
}
