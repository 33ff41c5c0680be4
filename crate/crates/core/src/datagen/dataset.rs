//! Binary dataset file: one JSON header line, then little-endian `f64` rows of Z, then of
//! X, then `u32` labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub d: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(rename = "config-hash")]
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub z: Matrix,
    pub x: Matrix,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn new(z: Matrix, x: Matrix, labels: Vec<u32>, seed: u64, config_hash: String) -> Result<Self> {
        if z.rows() != x.rows() || labels.len() != z.rows() {
            return Err(Error::Dimension(format!(
                "{} latent rows, {} observed rows, {} labels",
                z.rows(),
                x.rows(),
                labels.len()
            )));
        }
        let header = DatasetHeader { n: z.cols(), d: x.cols(), count: z.rows(), seed, config_hash };
        Ok(Self { header, z, x, labels })
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.header)
            .map_err(|e| Error::Format { what: "dataset header", detail: e.to_string() })?;
        w.write_all(b"\n")?;
        for v in self.z.data().iter().chain(self.x.data()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for l in &self.labels {
            w.write_all(&l.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: DatasetHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Format { what: "dataset header", detail: e.to_string() })?;
        let z = read_matrix(&mut r, header.count, header.n)?;
        let x = read_matrix(&mut r, header.count, header.d)?;
        let mut labels = Vec::with_capacity(header.count);
        let mut buf = [0u8; 4];
        for _ in 0..header.count {
            r.read_exact(&mut buf)?;
            labels.push(u32::from_le_bytes(buf));
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format { what: "dataset file", detail: "trailing bytes".into() });
        }
        Ok(Self { header, z, x, labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Matrix> {
    let mut bytes = vec![0u8; rows * cols * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Matrix::from_vec(rows, cols, data)
}
