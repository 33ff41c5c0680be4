//! Conversion of trained stages to and from checkpoints.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::nn::{Autoencoder, Checkpoint, Manifest, Mlp, MlpSpec, TensorEntry};
use crate::numerics::Matrix;

use super::{InputTransform, LogRecord, Stage1Model, Stage2Model};

const STAGE1_KIND: &str = "stage1";
const STAGE2_KIND: &str = "stage2";

/// Provenance stored alongside the tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub seeds: Value,
    pub config_hash: String,
}

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", detail: detail.into() }
}

struct Builder {
    entries: Vec<TensorEntry>,
    tensors: Vec<Vec<f64>>,
}

impl Builder {
    fn new() -> Self {
        Self { entries: Vec::new(), tensors: Vec::new() }
    }

    fn push(&mut self, name: impl Into<String>, t: &[f64]) {
        self.entries.push(TensorEntry { name: name.into(), len: t.len() });
        self.tensors.push(t.to_vec());
    }

    fn input(&mut self, t: &InputTransform) {
        self.push("input.shift", &t.shift);
        self.push("input.matrix", t.matrix.data());
    }

    fn net(&mut self, net: &Autoencoder) {
        for (prefix, mlp) in [("encoder", &net.encoder), ("decoder", &net.decoder)] {
            for (name, t) in mlp.named_tensors() {
                self.push(format!("{prefix}.{name}"), t);
            }
        }
    }

    fn finish(self, kind: &str, architecture: Value, meta: &RunMeta, step: u64, extra: Value) -> Checkpoint {
        Checkpoint {
            manifest: Manifest {
                kind: kind.into(),
                architecture,
                seeds: meta.seeds.clone(),
                step,
                config_hash: meta.config_hash.clone(),
                extra,
                tensors: self.entries,
            },
            tensors: self.tensors,
        }
    }
}

fn architecture(net: &Autoencoder) -> Value {
    json!({ "encoder": net.encoder.spec(), "decoder": net.decoder.spec() })
}

fn specs(arch: &Value) -> Result<(MlpSpec, MlpSpec)> {
    let get = |k: &str| -> Result<MlpSpec> {
        serde_json::from_value(arch.get(k).cloned().unwrap_or(Value::Null))
            .map_err(|e| format_err(format!("architecture.{k}: {e}")))
    };
    Ok((get("encoder")?, get("decoder")?))
}

fn read_input(t: &mut impl Iterator<Item = Vec<f64>>) -> Result<InputTransform> {
    let shift = t.next().ok_or_else(|| format_err("missing input shift"))?;
    let matrix = t.next().ok_or_else(|| format_err("missing input matrix"))?;
    let d = shift.len();
    Ok(InputTransform { shift, matrix: Matrix::from_vec(d, d, matrix)? })
}

fn read_net(arch: &Value, t: &mut impl Iterator<Item = Vec<f64>>) -> Result<Autoencoder> {
    let (enc, dec) = specs(arch)?;
    Ok(Autoencoder { encoder: Mlp::from_tensors(enc, t)?, decoder: Mlp::from_tensors(dec, t)? })
}

fn read_log(extra: &Value) -> Result<Vec<LogRecord>> {
    serde_json::from_value(extra.get("log").cloned().unwrap_or(json!([]))).map_err(|e| format_err(e.to_string()))
}

fn last_step(log: &[LogRecord]) -> u64 {
    log.last().map_or(0, |r| r.step as u64 + 1)
}

fn expect_kind(c: &Checkpoint, kind: &str) -> Result<()> {
    if c.manifest.kind != kind {
        return Err(format_err(format!("expected a {kind} checkpoint, found {}", c.manifest.kind)));
    }
    Ok(())
}

fn expect_end(t: &mut impl Iterator<Item = Vec<f64>>) -> Result<()> {
    match t.next() {
        None => Ok(()),
        Some(_) => Err(format_err("unexpected trailing tensors")),
    }
}

impl Stage1Model {
    pub fn to_checkpoint(&self, meta: &RunMeta) -> Checkpoint {
        let mut b = Builder::new();
        b.input(&self.input);
        b.net(&self.net);
        b.push("snapshot", self.snapshot.data());
        let extra = json!({ "log": self.log, "snapshot_rows": self.snapshot.rows() });
        b.finish(STAGE1_KIND, architecture(&self.net), meta, last_step(&self.log), extra)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        expect_kind(c, STAGE1_KIND)?;
        let mut t = c.tensors.iter().cloned();
        let input = read_input(&mut t)?;
        let net = read_net(&c.manifest.architecture, &mut t)?;
        let rows = c.manifest.extra.get("snapshot_rows").and_then(Value::as_u64).unwrap_or(0) as usize;
        let snapshot = Matrix::from_vec(rows, net.encoder.spec().output, t.next().unwrap_or_default())?;
        expect_end(&mut t)?;
        Ok(Self { input, net, log: read_log(&c.manifest.extra)?, snapshot })
    }
}

impl Stage2Model {
    pub fn to_checkpoint(&self, meta: &RunMeta) -> Checkpoint {
        let mut b = Builder::new();
        b.input(&self.input);
        b.net(&self.net);
        let extra = json!({ "log": self.log, "lambda_dual": self.lambda_dual });
        b.finish(STAGE2_KIND, architecture(&self.net), meta, last_step(&self.log), extra)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        expect_kind(c, STAGE2_KIND)?;
        let mut t = c.tensors.iter().cloned();
        let input = read_input(&mut t)?;
        let net = read_net(&c.manifest.architecture, &mut t)?;
        expect_end(&mut t)?;
        let lambda_dual = c.manifest.extra.get("lambda_dual").and_then(Value::as_f64).unwrap_or(0.0);
        Ok(Self { input, net, lambda_dual, log: read_log(&c.manifest.extra)? })
    }
}

/// Checkpoint of the parameters left behind by a diverged run.
pub fn partial_checkpoint(stage: u8, net: &Autoencoder, step: usize, meta: &RunMeta) -> Checkpoint {
    let mut b = Builder::new();
    b.net(net);
    b.finish(&format!("stage{stage}-partial"), architecture(net), meta, step as u64, Value::Null)
}
