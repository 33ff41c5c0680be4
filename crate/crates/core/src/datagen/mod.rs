//! Synthetic benchmark: random DAG, linear Gaussian SCM, masking into a degenerate
//! mixture, rotation, and an invertible piecewise-affine mixing network.

mod dataset;
mod mask;
mod mixing;
mod scm;

pub use dataset::{Dataset, DatasetHeader};
pub use mask::{binomial, build_mask_spec, default_component_count, rotation_matrix, MaskSpec, RhoMode};
pub use mixing::{build_mixing, mix_forward, mix_inverse, MixLayer, MixingInit, MixingNetwork, MixingOptions};
pub use scm::{sample_er_dag, simulate_scm, ScmSpec};

use crate::error::{Error, Result};
use crate::exec::{blocks, Exec};
use crate::numerics::{cholesky, Matrix, RngStream};
use crate::pdgmm::{GaussComponent, PdGmm};

const ROW_BLOCK: usize = 4096;

/// Latent samples with their component labels and the mixture they follow.
#[derive(Clone, Debug)]
pub struct LatentDataset {
    pub z: Matrix,
    pub labels: Vec<u32>,
    pub truth: PdGmm,
}

/// Per row: pick a component uniformly, draw the SCM, replace coordinates outside the
/// component's index set by the translation, then rotate.
pub fn latent_dataset(
    scm: &ScmSpec,
    mask: &MaskSpec,
    count: usize,
    rng: &mut RngStream,
    exec: Exec,
) -> Result<LatentDataset> {
    let n = scm.n();
    if mask.n != n || mask.translation.len() != n || mask.rotation.shape() != (n, n) {
        return Err(Error::Dimension(format!("mask for n = {} with an SCM over {n} nodes", mask.n)));
    }
    let truth = induced_mixture(scm, mask)?;
    let j = mask.num_components() as u64;
    let family = rng.split();
    let ranges = blocks(count, ROW_BLOCK);
    let parts = exec.map(ranges.len(), |b| {
        let (start, end) = ranges[b];
        let mut r = family.stream(b as u64);
        let mut rows: Vec<f64> = Vec::with_capacity((end - start) * n);
        let mut labels = Vec::with_capacity(end - start);
        let mut z = vec![0.0; n];
        for _ in start..end {
            let c = r.below(j) as usize;
            scm.draw_into(&mut r, &mut z);
            let k = &mask.index_sets[c];
            for (i, zi) in z.iter_mut().enumerate() {
                if !k.contains(&i) {
                    *zi = mask.translation[i];
                }
            }
            for i in 0..n {
                rows.push(mask.rotation.row(i).iter().zip(&z).map(|(a, b)| a * b).sum());
            }
            labels.push(c as u32);
        }
        (rows, labels)
    });
    let mut data = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for (rows, l) in parts {
        data.extend(rows);
        labels.extend(l);
    }
    Ok(LatentDataset { z: Matrix::from_vec(count, n, data)?, labels, truth })
}

/// Component `j`: mean `R·(Π_j μ + (I − Π_j) z⁰)`, factor `R·E_K·chol(Σ_KK)`.
pub fn induced_mixture(scm: &ScmSpec, mask: &MaskSpec) -> Result<PdGmm> {
    let n = scm.n();
    let cov = scm.covariance();
    let mu = scm.mean();
    let r = &mask.rotation;
    let mut comps = Vec::with_capacity(mask.num_components());
    for k in &mask.index_sets {
        let base: Vec<f64> = (0..n).map(|i| if k.contains(&i) { mu[i] } else { mask.translation[i] }).collect();
        let mean = r.matvec(&base)?;
        let chol = cholesky(&cov.select_rows(k).select_columns(k))?;
        let mut embed = Matrix::zeros(n, k.len());
        for (a, &i) in k.iter().enumerate() {
            embed.row_mut(i).copy_from_slice(chol.row(a));
        }
        let factor = r.matmul(&embed)?;
        let axis_aligned = (0..n).filter(|i| !k.contains(i)).all(|i| factor.row(i).iter().all(|&x| x == 0.0));
        comps.push(GaussComponent::new(mean, factor, axis_aligned.then(|| k.clone()))?);
    }
    let w = 1.0 / mask.num_components() as f64;
    let translation = r.matvec(&mask.translation)?;
    PdGmm::new(vec![w; mask.num_components()], comps, Some(translation))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(theta: f64, delta: f64) -> (ScmSpec, MaskSpec) {
        let mut rng = RngStream::new(4, 1);
        let scm = sample_er_dag(5, 1, &mut rng).unwrap();
        let mask =
            build_mask_spec(5, 10, RhoMode::Half, delta, theta, &scm.mean(), &scm.std(), &mut rng).unwrap();
        (scm, mask)
    }

    #[test]
    fn masked_coordinates_are_exactly_zero() {
        let (scm, mask) = setup(0.0, 0.0);
        let d = latent_dataset(&scm, &mask, 5000, &mut RngStream::new(1, 4), Exec::Parallel).unwrap();
        for (i, &l) in d.labels.iter().enumerate() {
            let nonzero = d.z.row(i).iter().filter(|&&x| x != 0.0).count();
            assert_eq!(nonzero, mask.index_sets[l as usize].len());
        }
        assert_eq!(d.truth.index_sets().unwrap(), mask.index_sets);
    }

    #[test]
    fn rotated_truth_loses_axis_alignment() {
        let (scm, mask) = setup(45.0, 1.0);
        let truth = induced_mixture(&scm, &mask).unwrap();
        assert!(truth.components().iter().any(|c| c.basis_index().is_none()));
    }

    #[test]
    fn execution_mode_does_not_change_data() {
        let (scm, mask) = setup(30.0, 2.0);
        let a = latent_dataset(&scm, &mask, 9000, &mut RngStream::new(1, 4), Exec::Sequential).unwrap();
        let b = latent_dataset(&scm, &mask, 9000, &mut RngStream::new(1, 4), Exec::Parallel).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.labels, b.labels);
    }
}
