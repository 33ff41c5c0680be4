//! Checkpoint file: one JSON manifest line, then each tensor as a little-endian `u64`
//! length followed by that many little-endian `f64` values, in manifest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    /// Network layouts and any other structural description.
    pub architecture: Value,
    pub seeds: Value,
    pub step: u64,
    pub config_hash: String,
    #[serde(default)]
    pub extra: Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        if self.manifest.tensors.len() != self.tensors.len()
            || self.manifest.tensors.iter().zip(&self.tensors).any(|(e, t)| e.len != t.len())
        {
            return Err(Error::Format { what: "checkpoint", detail: "manifest does not describe the tensors".into() });
        }
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.manifest)
            .map_err(|e| Error::Format { what: "checkpoint manifest", detail: e.to_string() })?;
        w.write_all(b"\n")?;
        for t in &self.tensors {
            w.write_all(&(t.len() as u64).to_le_bytes())?;
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let manifest: Manifest = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Format { what: "checkpoint manifest", detail: e.to_string() })?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in &manifest.tensors {
            let mut len = [0u8; 8];
            r.read_exact(&mut len)?;
            let len = u64::from_le_bytes(len) as usize;
            if len != entry.len {
                return Err(Error::Format {
                    what: "checkpoint",
                    detail: format!("tensor {} has {len} values, manifest says {}", entry.name, entry.len),
                });
            }
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            tensors.push(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect());
        }
        Ok(Self { manifest, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            manifest: Manifest {
                kind: "test".into(),
                architecture: serde_json::json!({"widths": [2, 3]}),
                seeds: serde_json::json!([1, 2]),
                step: 7,
                config_hash: "deadbeef".into(),
                extra: Value::Null,
                tensors: vec![TensorEntry { name: "a".into(), len: 2 }, TensorEntry { name: "b".into(), len: 0 }],
            },
            tensors: vec![vec![0.1, -3.0], vec![]],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn inconsistent_manifest_rejected() {
        let mut c = sample();
        c.tensors[0].push(1.0);
        assert!(c.write_to(Vec::new()).is_err());
    }
}
