use mpobm::hamiltonian::{estimate_h_global, estimate_h_local, SamplingPlan};
use mpobm::hardness::{parse_formula, poly_extend, random_formula};
use mpobm::harness::{fit_law, Law};
use mpobm::mpo::{mpo_from_dense, mpo_from_factor};
use mpobm::persist::{load_mpo, save_mpo};
use mpobm::spectral::relative_gaps;
use mpobm::targets::path_clique;
use mpobm::{make_target, Basis, BornModel, ScoreOracle, TargetKind, TargetParams};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_factor(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: DMatrix<f64> = DMatrix::from_fn(n, r, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
    let t = (&w * w.transpose()).trace();
    w / t.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interval_matrices_are_additive(a in -6.0f64..0.0, mid in 0.0f64..1.0, c in 1.0f64..6.0, k in 1usize..6) {
        let basis = Basis::hermite_scaled(k, 1.3).unwrap();
        let b = a + mid * (c - a);
        let sum = basis.interval(a, b).unwrap() + basis.interval(b, c).unwrap();
        prop_assert!((sum - basis.interval(a, c).unwrap()).amax() < 1e-10);
    }

    #[test]
    fn printed_formulas_parse_back(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_formula(n, &mut rng);
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn polynomial_extension_agrees_on_the_cube(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_formula(n, &mut rng);
        for mask in 0..(1u32 << n) {
            let z: Vec<bool> = (0..n).map(|i| (mask >> i) & 1 == 1).collect();
            let x: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            prop_assert_eq!(poly_extend(&f, &x), if f.eval(&z) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn compressed_density_keeps_unit_mass(seed in any::<u64>(), k in 2usize..4, dim in 2usize..5, r in 1usize..4) {
        let n = k.pow(dim as u32);
        let w = random_factor(n, r, seed);
        let rho = &w * w.transpose();
        let basis = Basis::hermite(k).unwrap();
        let model = BornModel::from_dense(rho.clone(), &basis, dim).unwrap().to_mpo(1e-10, 512).unwrap();
        let sites: Vec<usize> = (0..dim).collect();
        let all = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
        prop_assert!((model.box_probability(&sites, &all).unwrap().value - 1.0).abs() < 1e-8);
        let dense = model.mpo().unwrap().to_dense().unwrap();
        prop_assert!((dense - &rho).norm() <= 1e-8 * rho.norm());
    }

    #[test]
    fn factored_and_dense_compressions_agree(seed in any::<u64>(), dim in 2usize..5, r in 1usize..3) {
        let w = random_factor(2usize.pow(dim as u32), r, seed);
        let rho = &w * w.transpose();
        let (a, _) = mpo_from_dense(&rho, 2, dim, 1e-12, 256).unwrap();
        let (b, _) = mpo_from_factor(&w, 2, dim, 1e-12, 256).unwrap();
        let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
        prop_assert!((da - db).norm() < 1e-9 * rho.norm());
    }

    #[test]
    fn mpo_apply_matches_dense(seed in any::<u64>(), dim in 1usize..4) {
        let n = 3usize.pow(dim as u32);
        let w = random_factor(n, 2, seed);
        let (m, _) = mpo_from_dense(&(&w * w.transpose()), 3, dim, 1e-12, 256).unwrap();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let dense = m.to_dense().unwrap() * nalgebra::DVector::from_column_slice(&v);
        let applied = m.apply(&v).unwrap();
        for (x, y) in applied.iter().zip(dense.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_gaps_of_sorted_spectra_are_nonnegative(mut vals in prop::collection::vec(-10.0f64..10.0, 2..30)) {
        vals.sort_by(f64::total_cmp);
        let gaps = relative_gaps(&vals);
        prop_assert_eq!(gaps.len(), vals.len() - 1);
        prop_assert!(gaps.iter().all(|g| *g >= 0.0));
    }

    #[test]
    fn cliques_are_contiguous_windows(dim in 1usize..12) {
        for j in 0..dim {
            let c = path_clique(j, dim);
            prop_assert!(c.contains(&j));
            prop_assert!(c.len() <= 3 && c.end <= dim);
        }
    }

    #[test]
    fn local_estimation_spends_exactly_the_budget(budget in 1u64..400, dim in 2usize..6, seed in any::<u64>()) {
        let basis = Basis::hermite(2).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::Xshape), dim).unwrap();
        let est = estimate_h_local(&basis, &t, &SamplingPlan::new(budget, seed)).unwrap();
        prop_assert_eq!(t.query_count(), budget);
        prop_assert_eq!(est.meta.queries, budget);
    }

    #[test]
    fn global_estimation_is_reproducible(budget in 1u64..600, seed in any::<u64>()) {
        let basis = Basis::hermite(2).unwrap();
        let t = make_target(&TargetParams::new(TargetKind::Funnel), 3).unwrap();
        let a = estimate_h_global(&basis, &t, &SamplingPlan::new(budget, seed)).unwrap();
        let b = estimate_h_global(&basis, &t, &SamplingPlan::new(budget, seed)).unwrap();
        prop_assert_eq!(a.matrix, b.matrix);
        prop_assert_eq!(t.query_count(), 2 * budget);
    }

    #[test]
    fn exact_power_laws_are_recovered(a in 0.1f64..10.0, b in 0.5f64..4.0) {
        let pts: Vec<(usize, u64)> = (2..=10).map(|d| (d, (a * (d as f64).powf(b) * 1e6).round() as u64)).collect();
        let fit = fit_law(Law::Power, &pts).unwrap();
        prop_assert!((fit.b - b).abs() < 1e-6, "{} vs {}", fit.b, b);
    }

    #[test]
    fn saved_mpos_reload_bitwise(seed in any::<u64>(), dim in 2usize..4) {
        let w = random_factor(2usize.pow(dim as u32), 2, seed);
        let (m, _) = mpo_from_dense(&(&w * w.transpose()), 2, dim, 1e-12, 64).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        save_mpo(&m, 1e-12, 64, &stem, None).unwrap();
        prop_assert_eq!(load_mpo(&stem).unwrap().0, m);
    }
}
