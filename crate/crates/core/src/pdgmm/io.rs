//! JSON form of a mixture. Reals are written with 17 significant digits so that
//! parse(emit(P)) reproduces every bit.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::pdgmm::{GaussComponent, PdGmm};

#[derive(Deserialize)]
struct RawMixture {
    n: usize,
    #[serde(rename = "J")]
    j: usize,
    weights: Vec<f64>,
    components: Vec<RawComponent>,
    #[serde(default)]
    translation: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawComponent {
    mean: Vec<f64>,
    factor: Vec<Vec<f64>>,
    #[serde(default)]
    basis_index: Option<Vec<usize>>,
}

fn push_real(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a String cannot fail");
}

fn push_reals(out: &mut String, xs: &[f64]) {
    out.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_real(out, x);
    }
    out.push(']');
}

impl PdGmm {
    /// `{n, J, weights, components: [{mean, factor, basis_index}], translation}`; factor
    /// is a list of rows, `basis_index` is 0-based or `null`.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        write!(s, "{{\"n\":{},\"J\":{},\"weights\":", self.dim(), self.num_components()).unwrap();
        push_reals(&mut s, self.weights());
        s.push_str(",\"components\":[");
        for (j, c) in self.components().iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str("{\"mean\":");
            push_reals(&mut s, c.mean());
            s.push_str(",\"factor\":[");
            for i in 0..c.factor().rows() {
                if i > 0 {
                    s.push(',');
                }
                push_reals(&mut s, c.factor().row(i));
            }
            s.push_str("],\"basis_index\":");
            match c.basis_index() {
                Some(k) => {
                    let items: Vec<String> = k.iter().map(|i| i.to_string()).collect();
                    write!(s, "[{}]", items.join(",")).unwrap();
                }
                None => s.push_str("null"),
            }
            s.push('}');
        }
        s.push_str("],\"translation\":");
        push_reals(&mut s, self.translation());
        s.push('}');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawMixture =
            serde_json::from_str(text).map_err(|e| Error::Format { what: "mixture JSON", detail: e.to_string() })?;
        if raw.j != raw.components.len() {
            return Err(Error::Format {
                what: "mixture JSON",
                detail: format!("J = {} but {} components listed", raw.j, raw.components.len()),
            });
        }
        let mut comps = Vec::with_capacity(raw.j);
        for c in raw.components {
            if c.mean.len() != raw.n || c.factor.len() != raw.n {
                return Err(Error::Format {
                    what: "mixture JSON",
                    detail: format!("component does not have dimension n = {}", raw.n),
                });
            }
            let k = c.factor.first().map_or(0, |r| r.len());
            let factor = if k == 0 { Matrix::zeros(raw.n, 0) } else { Matrix::from_rows(&c.factor)? };
            comps.push(GaussComponent::new(c.mean, factor, c.basis_index)?);
        }
        PdGmm::new(raw.weights, comps, raw.translation)
    }
}
