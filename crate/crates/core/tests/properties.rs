use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use spintensor::classicality::{
    closest_classical_state, kkt_violation, nnls, quantumness, QuantumnessConfig, KKT_TOL,
};
use spintensor::experiments::{gen_border_states, histogram, pearson, ExperimentConfig, HistogramSpec};
use spintensor::rng::{seeded, uniform_s3};
use spintensor::spin::{
    coherent_amplitudes, coherent_overlap_sq, coherent_state, depolarize, dicke_isometry, hermitian_eigenvalues,
    hs_distance, hs_distance_matrices, random_hs_state, CMatrix, CoherentDirection, Spin, SpinState,
};
use spintensor::tensor::{
    coherent_tensor, multisets, state_from_tensor, tensor_from_state, Rotation4, SymmetricTensor,
};
use spintensor::zeig::{all_z_eigenvalues, min_z_eigenvalue, sign_counterpart_check, ZSolverConfig};

fn spin(twice_j: usize) -> Spin {
    Spin::from_order(twice_j).unwrap()
}

fn direction() -> impl Strategy<Value = CoherentDirection> {
    (0.0..=std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(t, p)| CoherentDirection::new(t, p).unwrap())
}

fn hs_tensor(twice_j: usize, seed: u64) -> SymmetricTensor {
    tensor_from_state(&random_hs_state(spin(twice_j), &mut seeded(seed))).unwrap()
}

fn mixture(s: Spin, terms: &[(CoherentDirection, f64)]) -> SpinState {
    let total: f64 = terms.iter().map(|t| t.1).sum();
    let mut m = CMatrix::zeros(s.dim(), s.dim());
    for &(d, w) in terms {
        m += coherent_state(s, d).matrix() * Complex64::new(w / total, 0.0);
    }
    SpinState::new(s, m).unwrap()
}

fn mixture_terms() -> impl Strategy<Value = Vec<(CoherentDirection, f64)>> {
    prop::collection::vec((direction(), 0.05..1.0f64), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coherent_states_are_rank_one(twice_j in 1usize..=10, d in direction()) {
        let ev = hermitian_eigenvalues(coherent_state(spin(twice_j), d).matrix());
        let n = ev.len();
        prop_assert!((ev[n - 1] - 1.0).abs() < 1e-10);
        prop_assert!(ev[..n - 1].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn coherent_overlap_matches_amplitudes(twice_j in prop::sample::select(vec![1usize, 2, 3, 4, 6]), a in direction(), b in direction()) {
        let s = spin(twice_j);
        let ip = coherent_amplitudes(s, a).dotc(&coherent_amplitudes(s, b)).norm_sqr();
        prop_assert!((coherent_overlap_sq(s, a, b) - ip).abs() < 1e-12);
    }

    #[test]
    fn random_states_are_valid(twice_j in 1usize..=12, seed: u64) {
        let rho = random_hs_state(spin(twice_j), &mut seeded(seed));
        prop_assert!(rho.validate().is_ok());
    }

    #[test]
    fn hs_distance_triangle_inequality(twice_j in 1usize..=8, seed: u64) {
        let mut rng = seeded(seed);
        let s = spin(twice_j);
        let (a, b, c) = (random_hs_state(s, &mut rng), random_hs_state(s, &mut rng), random_hs_state(s, &mut rng));
        let ab = hs_distance(&a, &b).unwrap();
        let bc = hs_distance(&b, &c).unwrap();
        let ac = hs_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!((ab - hs_distance(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn dicke_columns_orthonormal_and_symmetric(twice_j in 1usize..=8, swap in any::<prop::sample::Index>()) {
        let s = spin(twice_j);
        let d = dicke_isometry(s, 10).unwrap();
        let gram = d.adjoint() * &d;
        for r in 0..gram.nrows() {
            for c in 0..gram.ncols() {
                let want = if r == c { 1.0 } else { 0.0 };
                prop_assert!((gram[(r, c)] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        // Swapping two qubits permutes rows and leaves every column unchanged.
        let n = s.order();
        let q = swap.index(n * n);
        let (q1, q2) = (q / n, q % n);
        for b in 0..d.nrows() {
            let (b1, b2) = ((b >> q1) & 1, (b >> q2) & 1);
            let swapped = (b & !(1 << q1) & !(1 << q2)) | (b1 << q2) | (b2 << q1);
            for k in 0..d.ncols() {
                prop_assert_eq!(d[(b, k)], d[(swapped, k)]);
            }
        }
    }

    #[test]
    fn tensor_entries_are_permutation_symmetric(twice_j in 1usize..=6, seed: u64, perm_seed: u64) {
        use rand::seq::SliceRandom;
        let a = hs_tensor(twice_j, seed);
        let mut rng = seeded(perm_seed);
        for counts in multisets(twice_j) {
            let mut idx: Vec<usize> = (0..4).flat_map(|mu| std::iter::repeat_n(mu, counts[mu] as usize)).collect();
            let base = a.get_indices(&idx).unwrap();
            idx.shuffle(&mut rng);
            prop_assert_eq!(a.get_indices(&idx).unwrap(), base);
        }
    }

    #[test]
    fn contraction_is_homogeneous(twice_j in 1usize..=8, seed: u64, t in -3.0..3.0f64) {
        let a = hs_tensor(twice_j, seed);
        let x = uniform_s3(&mut seeded(seed ^ 1));
        let tx = x.map(|c| t * c);
        let want = t.powi(twice_j as i32) * a.contract_full(&x);
        prop_assert!((a.contract_full(&tx) - want).abs() <= 1e-10 * want.abs().max(1e-300) + 1e-14);
    }

    #[test]
    fn roundtrip_is_exact(twice_j in 1usize..=10, seed: u64) {
        let s = spin(twice_j);
        let rho = random_hs_state(s, &mut seeded(seed));
        let a = tensor_from_state(&rho).unwrap();
        prop_assert!(hs_distance(&state_from_tensor(&a, s).unwrap(), &rho).unwrap() < 1e-10);
        prop_assert!(a.contraction_identity_violation() < 1e-10);
    }

    #[test]
    fn coherent_tensor_is_outer_power(twice_j in 1usize..=8, d in direction()) {
        let s = spin(twice_j);
        let a = tensor_from_state(&coherent_state(s, d)).unwrap();
        let b = coherent_tensor(s, d.unit_vector());
        for (x, y) in a.entries().iter().zip(b.entries()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classical_mixtures_have_nonnegative_form(k in 1usize..=4, terms in mixture_terms(), seed: u64) {
        let s = spin(2 * k);
        let a = tensor_from_state(&mixture(s, &terms)).unwrap();
        let mut rng = seeded(seed);
        for _ in 0..10_000 {
            prop_assert!(a.contract_full(&uniform_s3(&mut rng)) >= -1e-12);
        }
    }

    #[test]
    fn eigenpairs_satisfy_definition(twice_j in 1usize..=6, seed: u64) {
        let a = hs_tensor(twice_j, seed);
        let pairs = all_z_eigenvalues(&a, &ZSolverConfig::with_seed(seed)).unwrap();
        prop_assert!(!pairs.is_empty());
        for p in &pairs {
            let norm = p.v.iter().map(|c| c * c).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            let av = a.contract_to_vector(&p.v);
            let r = (0..4).map(|i| (av[i] - p.lambda * p.v[i]).powi(2)).sum::<f64>().sqrt();
            prop_assert!(r <= 1e-10, "residual {r}");
            prop_assert!((a.contract_full(&p.v) - p.lambda).abs() <= 1e-10);
            if let Some(ok) = sign_counterpart_check(&a, p, 1e-10) {
                prop_assert!(ok);
            }
        }
        prop_assert!(pairs.windows(2).all(|w| w[0].lambda < w[1].lambda));
    }

    #[test]
    fn spin_one_spectrum_is_matrix_spectrum(seed: u64) {
        let a = hs_tensor(2, seed);
        let mut m = CMatrix::zeros(4, 4);
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] = Complex64::new(a.get_indices(&[r, c]).unwrap(), 0.0);
            }
        }
        let mut dense = hermitian_eigenvalues(&m);
        dense.dedup_by(|x, y| (*x - *y).abs() <= 1e-7);
        let z: Vec<f64> = all_z_eigenvalues(&a, &ZSolverConfig::with_seed(seed)).unwrap().iter().map(|p| p.lambda).collect();
        prop_assert_eq!(z.len(), dense.len());
        for (x, y) in z.iter().zip(&dense) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn positivity_link(twice_j in prop::sample::select(vec![2usize, 4, 6]), seed: u64, mix in 0.0..=1.0f64) {
        let s = spin(twice_j);
        let rho = depolarize(&random_hs_state(s, &mut seeded(seed)), mix).unwrap();
        let a = tensor_from_state(&rho).unwrap();
        let lmin = min_z_eigenvalue(&a, &ZSolverConfig::with_seed(seed)).unwrap().lambda;
        // The sampled minimum only resolves the sign away from the boundary.
        prop_assume!(lmin.abs() > 1e-6);
        let mut rng = seeded(seed ^ 7);
        let probe = (0..100_000).map(|_| a.contract_full(&uniform_s3(&mut rng))).fold(f64::INFINITY, f64::min);
        prop_assert!(probe >= lmin - 1e-10);
        prop_assert_eq!(lmin >= 0.0, probe >= -1e-8, "lambda_min {} probe {}", lmin, probe);
    }

    #[test]
    fn nnls_solutions_satisfy_kkt(n in 1usize..=30, rows in 1usize..=40, seed: u64) {
        use rand::Rng;
        let mut rng = seeded(seed);
        let b = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
        let g = b.transpose() * &b;
        // Least-squares form: c = B^T y keeps the objective bounded below.
        let y = nalgebra::DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        let c: Vec<f64> = (b.transpose() * y).iter().copied().collect();
        let w = nnls(&g, &c).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!(kkt_violation(&g, &c, &w) <= KKT_TOL);
    }

    #[test]
    fn histogram_integrates_to_one(values in prop::collection::vec(-5.0..5.0f64, 2..200), width in 0.01..2.0f64) {
        prop_assume!(values.iter().any(|&v| v != values[0]));
        let bins = histogram(&values, &HistogramSpec { bin_width: width, range: None }).unwrap();
        let area: f64 = bins.iter().map(|b| b.density * (b.hi - b.lo)).sum();
        prop_assert!((area - 1.0).abs() < 1e-9);
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), values.len());
    }

    #[test]
    fn pearson_is_bounded_and_symmetric(pairs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..100)) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson(&xs, &ys) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((r - pearson(&ys, &xs).unwrap()).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    // Eigenvalues survive rotation, and rotated eigenvectors are eigenvectors
    // of the rotated tensor.
    #[test]
    fn rotation_invariance(twice_j in 2usize..=8, seed: u64) {
        let a = hs_tensor(twice_j, seed);
        let cfg = |s| ZSolverConfig { num_starts: Some(4000), seed: s, ..ZSolverConfig::default() };
        let pairs = all_z_eigenvalues(&a, &cfg(seed)).unwrap();
        let mut rng = seeded(seed ^ 3);
        for k in 0..5u64 {
            let r = Rotation4::random(&mut rng);
            let b = a.rotate(&r);
            let rotated = all_z_eigenvalues(&b, &cfg(seed.wrapping_add(k + 1))).unwrap();
            prop_assert_eq!(rotated.len(), pairs.len());
            for (p, q) in pairs.iter().zip(&rotated) {
                prop_assert!((p.lambda - q.lambda).abs() <= 1e-6);
                let v = r.apply(&p.v);
                let bv = b.contract_to_vector(&v);
                let res = (0..4).map(|i| (bv[i] - p.lambda * v[i]).powi(2)).sum::<f64>().sqrt();
                prop_assert!(res <= 1e-8, "rotated eigenvector residual {res}");
            }
        }
    }

    // Mixing toward the maximally mixed (classical) state never moves a state
    // away from the classical set.
    #[test]
    fn depolarizing_does_not_increase_quantumness(seed: u64, hi in 0.3..=1.0f64, frac in 0.0..1.0f64) {
        let rho = random_hs_state(spin(4), &mut seeded(seed));
        let cfg = QuantumnessConfig::with_seed(seed);
        let q_hi = quantumness(&depolarize(&rho, hi).unwrap(), &cfg).unwrap().q;
        let q_lo = quantumness(&depolarize(&rho, hi * frac).unwrap(), &cfg).unwrap().q;
        prop_assert!(q_lo <= q_hi + 1e-3, "Q({}) = {q_lo} > Q({hi}) = {q_hi}", hi * frac);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn report_matches_its_witness(twice_j in 1usize..=6, seed: u64) {
        let rho = random_hs_state(spin(twice_j), &mut seeded(seed));
        let report = quantumness(&rho, &QuantumnessConfig::with_seed(seed)).unwrap();
        let direct = hs_distance_matrices(rho.matrix(), &report.decomposition.matrix().unwrap()).unwrap();
        prop_assert!((direct - report.q).abs() <= 1e-8);
        prop_assert!(report.q <= report.q_quadratic + 1e-12);
    }

    #[test]
    fn detection_soundness(k in 1usize..=3, seed: u64, mix in 0.0..=1.0f64) {
        let s = spin(2 * k);
        let rho = depolarize(&random_hs_state(s, &mut seeded(seed)), mix).unwrap();
        let lmin = min_z_eigenvalue(&tensor_from_state(&rho).unwrap(), &ZSolverConfig::with_seed(seed)).unwrap().lambda;
        let q = quantumness(&rho, &QuantumnessConfig::with_seed(seed)).unwrap().q;
        if lmin < -1e-6 {
            prop_assert!(q > 0.0, "lambda_min {lmin} but Q = {q}");
        }
    }

    #[test]
    fn classical_mixtures_are_not_detected(k in 1usize..=3, terms in mixture_terms(), seed: u64) {
        let rho = mixture(spin(2 * k), &terms);
        let lmin = min_z_eigenvalue(&tensor_from_state(&rho).unwrap(), &ZSolverConfig::with_seed(seed)).unwrap().lambda;
        prop_assert!(lmin >= -1e-6, "lambda_min {lmin}");
    }

    #[test]
    fn closest_classical_state_is_not_detected(k in 1usize..=3, seed: u64) {
        let rho = random_hs_state(spin(2 * k), &mut seeded(seed));
        let c = closest_classical_state(&rho, &QuantumnessConfig::with_seed(seed)).unwrap();
        prop_assert!(c.validate().is_ok());
        let lmin = min_z_eigenvalue(&tensor_from_state(&c).unwrap(), &ZSolverConfig::with_seed(seed)).unwrap().lambda;
        prop_assert!(lmin >= -1e-6, "lambda_min {lmin}");
    }

    // For odd N the form is odd, so every state, classical or not, has
    // lambda_min = -lambda_max <= 0: the sign test only applies to integer j.
    #[test]
    fn odd_order_spectra_are_symmetric(k in 0usize..=2, d in direction(), seed: u64) {
        let s = spin(2 * k + 3);
        let pairs = all_z_eigenvalues(&tensor_from_state(&coherent_state(s, d)).unwrap(), &ZSolverConfig::with_seed(seed)).unwrap();
        let lo = pairs.first().unwrap().lambda;
        let hi = pairs.last().unwrap().lambda;
        prop_assert!((lo + hi).abs() < 1e-8);
        prop_assert!((hi - 2f64.powf(s.j())).abs() < 1e-8);
    }

    #[test]
    fn seeded_runs_are_deterministic(twice_j in 1usize..=4, seed: u64) {
        let a = hs_tensor(twice_j, seed);
        let cfg = ZSolverConfig::with_seed(seed);
        prop_assert_eq!(all_z_eigenvalues(&a, &cfg).unwrap(), all_z_eigenvalues(&a, &cfg).unwrap());
        let rho = random_hs_state(spin(twice_j), &mut seeded(seed));
        let qcfg = QuantumnessConfig::with_seed(seed);
        prop_assert_eq!(quantumness(&rho, &qcfg).unwrap().to_json().unwrap(), quantumness(&rho, &qcfg).unwrap().to_json().unwrap());
    }
}

#[test]
fn border_states_are_valid_and_positive() {
    let cfg = ExperimentConfig::with_seed(17);
    for g in gen_border_states(spin(4), 12, &cfg).unwrap() {
        assert!(g.state.validate().is_ok());
        assert!(g.record.lambda_min >= -1e-6, "{:?}", g.record);
    }
}
