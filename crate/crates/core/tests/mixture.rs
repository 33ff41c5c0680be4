use pdgmm::numerics::{numeric_rank, Matrix, RngStream};
use pdgmm::pdgmm::{
    affine_pushforward, assemble_global_affine, check_common_basis, check_genericity, check_sufficient_variability,
    equal_up_to_permutation, mahalanobis, rank_preserving_projection, sample, GaussComponent, GenericityOptions,
    GroupVerdict, PdGmm, Variability,
};
use pdgmm::{Error, Exec};
use proptest::prelude::*;

fn comp(mean: &[f64], factor: &Matrix) -> GaussComponent {
    GaussComponent::new(mean.to_vec(), factor.clone(), None).unwrap()
}

fn column(v: &[f64]) -> Matrix {
    Matrix::column_vector(v)
}

fn random_mixture(seed: u64, n: usize, j: usize) -> PdGmm {
    let mut rng = RngStream::new(seed, 0);
    let mut comps = Vec::new();
    for _ in 0..j {
        let rank = 1 + rng.below(n as u64) as usize;
        let mean: Vec<f64> = (0..n).map(|_| 3.0 * rng.normal()).collect();
        let factor = Matrix::from_fn(n, rank, |_, _| rng.normal());
        comps.push(comp(&mean, &factor));
    }
    let raw: Vec<f64> = (0..j).map(|_| 0.5 + rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let drift = 1.0 - w.iter().sum::<f64>();
    w[0] += drift;
    PdGmm::new(w, comps, None).unwrap()
}

fn moments(z: &Matrix) -> (Vec<f64>, Matrix) {
    (z.column_means(), z.covariance())
}

#[test]
fn sampling_moments_and_labels() {
    let p = PdGmm::new(vec![1.0], vec![comp(&[0.0, 0.0], &Matrix::identity(2))], None).unwrap();
    let (z, _) = sample(&p, 100_000, &mut RngStream::new(1, 0), Exec::Parallel);
    assert!(z.covariance().max_abs_diff(&Matrix::identity(2)) < 0.05);

    let a = comp(&[0.0, 0.0], &column(&[1.0, 0.0]));
    let b = comp(&[4.0, 1.0], &Matrix::identity(2));
    let p = PdGmm::new(vec![0.3, 0.7], vec![a, b], None).unwrap();
    let (z, labels) = sample(&p, 100_000, &mut RngStream::new(2, 0), Exec::Parallel);
    let freq = labels.iter().filter(|&&l| l == 0).count() as f64 / 1e5;
    assert!((0.27..=0.33).contains(&freq));
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            assert_eq!(z[(i, 1)], 0.0);
        }
    }
}

#[test]
fn sampling_is_independent_of_execution_mode() {
    let p = random_mixture(3, 4, 3);
    let a = sample(&p, 10_000, &mut RngStream::new(9, 1), Exec::Sequential);
    let b = sample(&p, 10_000, &mut RngStream::new(9, 1), Exec::Parallel);
    assert_eq!(a, b);
}

#[test]
fn degenerate_mahalanobis() {
    let c = comp(&[0.0, 0.0], &column(&[1.0, 0.0]));
    assert!((mahalanobis(&[2.0, 0.0], &c, 1e-10).unwrap() - 2.0).abs() < 1e-12);
    assert!(mahalanobis(&[0.0, 3.0], &c, 1e-10).unwrap().abs() < 1e-12);
    let full = comp(&[1.0, -1.0], &Matrix::identity(2));
    assert_eq!(mahalanobis(&[1.0, -1.0], &full, 1e-10).unwrap(), 0.0);
}

#[test]
fn pushforward_examples() {
    let p = random_mixture(4, 3, 2);
    let same = affine_pushforward(&p, &Matrix::identity(3), &[0.0; 3]).unwrap();
    assert_eq!(same.weights(), p.weights());
    for (a, b) in same.components().iter().zip(p.components()) {
        assert_eq!(a.mean(), b.mean());
        assert!(a.covariance().max_abs_diff(&b.covariance()) < 1e-12);
    }
    assert_eq!(equal_up_to_permutation(&p, &same, 1e-9), Some(vec![0, 1]));

    let doubled = affine_pushforward(&p, &Matrix::identity(3).scale(2.0), &[0.0; 3]).unwrap();
    for (a, b) in doubled.components().iter().zip(p.components()) {
        let mu: Vec<f64> = b.mean().iter().map(|m| 2.0 * m).collect();
        assert!(a.mean().iter().zip(&mu).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(a.covariance().max_abs_diff(&b.covariance().scale(4.0)) < 1e-10);
    }
}

#[test]
fn pushforward_agrees_with_mapped_samples() {
    let a = comp(&[1.0, 0.0], &column(&[1.0, 0.5]));
    let b = comp(&[-1.0, 2.0], &Matrix::from_rows(&[[1.0, 0.2], [0.0, 0.7]]).unwrap());
    let p = PdGmm::new(vec![0.4, 0.6], vec![a, b], None).unwrap();
    let h = Matrix::from_rows(&[[1.2, -0.4], [0.3, 0.9]]).unwrap();
    let off = [0.5, -2.0];
    let (z, _) = sample(&p, 100_000, &mut RngStream::new(5, 0), Exec::Parallel);
    let mut mapped = z.matmul_t(&h).unwrap();
    mapped.add_row_vector(&off);
    let q = affine_pushforward(&p, &h, &off).unwrap();
    let (direct, _) = sample(&q, 100_000, &mut RngStream::new(6, 0), Exec::Parallel);
    let (m1, c1) = moments(&mapped);
    let (m2, c2) = moments(&direct);
    assert!(m1.iter().zip(&m2).all(|(a, b)| (a - b).abs() < 0.05));
    assert!(c1.max_abs_diff(&c2) < 0.05);
}

#[test]
fn permutation_equality_examples() {
    let p = random_mixture(7, 3, 4);
    let rev: Vec<GaussComponent> = p.components().iter().rev().cloned().collect();
    let w: Vec<f64> = p.weights().iter().rev().copied().collect();
    let q = PdGmm::new(w, rev, None).unwrap();
    assert_eq!(equal_up_to_permutation(&p, &q, 1e-9), Some(vec![3, 2, 1, 0]));

    let mut w = p.weights().to_vec();
    w[0] += 1e-8;
    w[1] -= 1e-8;
    let perturbed = PdGmm::new(w, p.components().to_vec(), None).unwrap();
    assert_eq!(equal_up_to_permutation(&p, &perturbed, 1e-9), None);
}

#[test]
fn rank_preserving_projection_examples() {
    let mut rng = RngStream::new(8, 0);
    let sigma = Matrix::from_diag(&[1.0, 1.0, 0.0]);
    let (a, _) = rank_preserving_projection(&sigma, 2, &mut rng, 100).unwrap();
    let projected = a.t_matmul(&sigma.matmul(&a).unwrap()).unwrap();
    assert_eq!(numeric_rank(&projected, 1e-8).unwrap(), 2);

    let (_, tries) = rank_preserving_projection(&Matrix::zeros(3, 3), 0, &mut rng, 100).unwrap();
    assert_eq!(tries, 1);

    let (a, _) = rank_preserving_projection(&Matrix::identity(3), 3, &mut rng, 100).unwrap();
    assert_eq!(numeric_rank(&a.t_matmul(&a).unwrap(), 1e-8).unwrap(), 3);
}

#[test]
fn genericity_examples() {
    let e1 = column(&[1.0, 0.0]);
    let e2 = column(&[0.0, 1.0]);
    let opts = GenericityOptions::default();
    let swap = PdGmm::new(vec![0.5, 0.5], vec![comp(&[0.0, 0.0], &e1), comp(&[0.0, 0.0], &e2)], None).unwrap();
    let r = check_genericity(&swap, &opts, &mut RngStream::new(1, 0)).unwrap();
    assert_eq!(r.groups[0].verdict, GroupVerdict::SuspectFail);

    let shifted = PdGmm::new(vec![0.5, 0.5], vec![comp(&[0.0, 0.0], &e1), comp(&[0.0, 5.0], &e2)], None).unwrap();
    assert!(check_genericity(&shifted, &opts, &mut RngStream::new(1, 0)).unwrap().passed());

    let single = PdGmm::new(vec![1.0], vec![comp(&[0.0, 0.0], &e1)], None).unwrap();
    assert!(check_genericity(&single, &opts, &mut RngStream::new(1, 0)).unwrap().passed());
}

#[test]
fn variability_examples() {
    assert_eq!(check_sufficient_variability(&[vec![0], vec![1, 2]], 3), Variability::Violated { coordinate: 1 });
    let n = 6;
    let loo: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&c| c != i).collect()).collect();
    assert_eq!(check_sufficient_variability(&loo, n), Variability::Sufficient);
    assert!(matches!(check_sufficient_variability(&[(0..n).collect()], n), Variability::Violated { .. }));
}

#[test]
fn common_basis_examples() {
    let line = |o: [f64; 2], d: [f64; 2]| (o.to_vec(), column(&d));
    let cb = check_common_basis(&[line([0.0, 0.0], [1.0, 0.0]), line([0.0, 0.0], [0.0, 1.0])], 1e-8).unwrap().unwrap();
    assert_eq!(cb.index_sets, vec![vec![0], vec![1]]);
    assert!(cb.translation.iter().all(|t| t.abs() < 1e-12));
    let dependent = [line([0.0, 0.0], [1.0, 0.0]), line([0.0, 0.0], [0.0, 1.0]), line([0.0, 0.0], [1.0, 1.0])];
    assert!(check_common_basis(&dependent, 1e-8).unwrap().is_none());
    let parallel = [line([0.0, 0.0], [1.0, 0.0]), line([0.0, 1.0], [1.0, 0.0])];
    assert!(check_common_basis(&parallel, 1e-8).unwrap().is_none());
}

/// Per-component maps that all restrict one global affine map `a·z + b` to the component
/// supports, with the component-only part perturbed off the support.
fn consistent_maps(seed: u64, n: usize, sets: &[Vec<usize>], basis: &Matrix, z0: &[f64]) -> (Matrix, Vec<f64>, Vec<(Matrix, Vec<f64>)>) {
    let mut rng = RngStream::new(seed, 0);
    let a = Matrix::from_fn(n, n, |_, _| rng.normal());
    let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let maps = sets
        .iter()
        .map(|k| {
            // h_j = a + e·cᵀ where c annihilates the support directions, b_j keeps z⁰ fixed.
            let support = basis.select_columns(k);
            let complement = pdgmm::numerics::null_space(&support.transpose(), 1e-10).unwrap();
            let mut h = a.clone();
            if complement.cols() > 0 {
                let coef = Matrix::from_fn(n, complement.cols(), |_, _| rng.normal());
                h = h.add(&coef.matmul_t(&complement).unwrap()).unwrap();
            }
            let at_z0 = a.matvec(z0).unwrap();
            let hz0 = h.matvec(z0).unwrap();
            let bj: Vec<f64> = (0..n).map(|i| b[i] + at_z0[i] - hz0[i]).collect();
            (h, bj)
        })
        .collect();
    (a, b, maps)
}

#[test]
fn global_affine_assembly_on_sampled_support_points() {
    let n = 4;
    let mut rng = RngStream::new(21, 0);
    let basis = Matrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.3 * rng.normal() });
    let z0: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let sets = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3]];
    let (_, _, maps) = consistent_maps(22, n, &sets, &basis, &z0);
    let (a, b) = assemble_global_affine(&maps, &z0, &basis, &sets).unwrap();
    for t in 0..1000 {
        let j = t % sets.len();
        let mut z = z0.clone();
        for &k in &sets[j] {
            let c = rng.normal();
            for i in 0..n {
                z[i] += c * basis[(i, k)];
            }
        }
        let global: Vec<f64> = a.matvec(&z).unwrap().iter().zip(&b).map(|(x, y)| x + y).collect();
        let local: Vec<f64> = maps[j].0.matvec(&z).unwrap().iter().zip(&maps[j].1).map(|(x, y)| x + y).collect();
        let err = global.iter().zip(&local).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "point {t}: {err}");
    }
}

#[test]
fn global_affine_assembly_rejects_dependent_spans() {
    let basis = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
    let id = (Matrix::identity(2), vec![0.0, 0.0]);
    let r = assemble_global_affine(&[id.clone(), id.clone(), id], &[0.0, 0.0], &basis, &[vec![0], vec![1], vec![2]]);
    let Err(Error::NotABasis(msg)) = r else { panic!("expected a basis error, got {r:?}") };
    assert!(!msg.is_empty());
}

#[test]
fn mixture_json_round_trip_is_exact() {
    let p = random_mixture(31, 4, 3);
    let q = PdGmm::from_json(&p.to_json()).unwrap();
    assert_eq!(q.weights(), p.weights());
    for (a, b) in q.components().iter().zip(p.components()) {
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.factor(), b.factor());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pushforward_composes(seed in any::<u64>()) {
        let p = random_mixture(seed, 3, 3);
        let mut rng = RngStream::new(seed, 9);
        let h1 = Matrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.0 } + 0.3 * rng.normal());
        let h2 = Matrix::from_fn(3, 3, |i, j| if i == j { 1.5 } else { 0.0 } + 0.3 * rng.normal());
        let b1: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let b2: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let stepwise = affine_pushforward(&affine_pushforward(&p, &h1, &b1).unwrap(), &h2, &b2).unwrap();
        let h = h2.matmul(&h1).unwrap();
        let b: Vec<f64> = h2.matvec(&b1).unwrap().iter().zip(&b2).map(|(x, y)| x + y).collect();
        let direct = affine_pushforward(&p, &h, &b).unwrap();
        prop_assert_eq!(equal_up_to_permutation(&stepwise, &direct, 1e-8), Some((0..3).collect::<Vec<_>>()));
    }

    #[test]
    fn permutation_equality_is_symmetric(seed in any::<u64>(), j in 1..=5usize) {
        let p = random_mixture(seed, 3, j);
        let mut order: Vec<usize> = (0..j).collect();
        RngStream::new(seed, 4).shuffle(&mut order);
        let comps: Vec<GaussComponent> = order.iter().map(|&i| p.components()[i].clone()).collect();
        let w: Vec<f64> = order.iter().map(|&i| p.weights()[i]).collect();
        let total: f64 = w.iter().sum();
        prop_assume!((total - 1.0).abs() <= 1e-12);
        let q = PdGmm::new(w, comps, None).unwrap();
        let forward = equal_up_to_permutation(&p, &q, 1e-9).unwrap();
        let backward = equal_up_to_permutation(&q, &p, 1e-9).unwrap();
        for (i, &f) in forward.iter().enumerate() {
            prop_assert_eq!(backward[f], i);
            prop_assert_eq!(order[f], i);
        }
    }

    #[test]
    fn projection_preserves_rank(seed in any::<u64>(), n in 2..=6usize, k in 0..=6usize) {
        let k = k.min(n);
        let mut rng = RngStream::new(seed, 5);
        let f = Matrix::from_fn(n, k, |_, _| rng.normal());
        let sigma = if k == 0 { Matrix::zeros(n, n) } else { f.matmul_t(&f).unwrap() };
        let m = k.max(1).min(n);
        let (a, _) = rank_preserving_projection(&sigma, m, &mut rng, 100).unwrap();
        let projected = a.t_matmul(&sigma.matmul(&a).unwrap()).unwrap();
        prop_assert_eq!(numeric_rank(&projected, 1e-8).unwrap(), numeric_rank(&sigma, 1e-8).unwrap());
    }
}
