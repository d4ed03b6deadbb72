use eto::evolver::{EvolverConfig, Evolver};
use eto::kernel::{ObservableProperty, PopulationStats, Task};
use eto::tasks::{make_family, FamilyKind, FamilySpec};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn moments_of_500_gaussian_samples_within_three_standard_errors() {
    let mean = DVector::from_vec(vec![1.0, -2.0]);
    // cov = L L^T = [[4, 1.2], [1.2, 1]]
    let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.6, 0.8]);
    let cov = &l * l.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 500;
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            (&mean + &l * z).iter().copied().collect()
        })
        .collect();
    let st = PopulationStats::from_samples(&samples).unwrap();
    assert_eq!(st.sample_count(), n);
    let nf = n as f64;
    for i in 0..2 {
        let se = (cov[(i, i)] / nf).sqrt();
        assert!((st.mean()[i] - mean[i]).abs() < 3.0 * se, "mean {i}");
        for j in 0..2 {
            // Var(s_ij) = (c_ij^2 + c_ii c_jj) / (n - 1)
            let se = ((cov[(i, j)].powi(2) + cov[(i, i)] * cov[(j, j)]) / (nf - 1.0)).sqrt();
            assert!((st.covariance()[(i, j)] - cov[(i, j)]).abs() < 3.0 * se, "cov {i}{j}");
        }
    }
}

#[test]
fn evolver_snapshot_tracks_its_population() {
    let spec = FamilySpec::new(FamilyKind::ShiftedSphere, 3, 1.0, 8);
    let fam = make_family(&spec, 1, &[0.5, 0.0, -0.5]).unwrap();
    let task: Task = fam.target.clone();
    let mut ev = Evolver::new(task, EvolverConfig::eo_a(2000, 1)).unwrap();
    while ev.step() {}
    let ObservableProperty::PopulationStats(st) = ev.snapshot_observable().unwrap() else {
        panic!("population observable expected");
    };
    assert_eq!(st.sample_count(), EvolverConfig::eo_a(2000, 1).mu);
    for (m, t) in st.mean().iter().zip([0.5, 0.0, -0.5]) {
        assert!((m - t).abs() < 1e-2);
    }
}
