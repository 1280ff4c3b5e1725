mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use zeroshot_ecg::sparse::{
    admm_lasso, annihilator_matrix, auc, build_annihilator, flops, learn_dictionary, omp, residual_lae, residual_npe,
    residual_sae, Dictionary, DictionaryConfig, LsOperator, ResidualKind, ResidualModel,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn annihilator_kills_dictionary(seed in 0u64..10_000, len in 8usize..96, frac in 0.1f64..0.9) {
        let mut r = rng(seed);
        let atoms = ((len as f64 * frac) as usize).clamp(1, len - 1);
        let d = random_dictionary(len, atoms, &mut r);
        let f = annihilator_matrix(&d).unwrap();
        prop_assert_eq!(f.shape(), (len - atoms, len));
        prop_assert!((&f * &d).norm() <= 1e-8);
        prop_assert!((&f * f.transpose() - DMatrix::identity(len - atoms, len - atoms)).norm() <= 1e-8);
    }

    #[test]
    fn npe_ignores_the_normal_component(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let d = random_dictionary(64, 12, &mut r);
        let f = build_annihilator(&Dictionary::new("p", d.clone()).unwrap()).unwrap();
        let e = gaussian_vec(64, &mut r);
        let x = gaussian_vec(12, &mut r);
        let s: Vec<f64> = matvec(&d, &x).iter().zip(&e).map(|(a, b)| a + b).collect();
        let with = residual_npe(&f, &s).unwrap();
        let without = residual_npe(&f, &e).unwrap();
        prop_assert!(max_diff(&with.residual, &without.residual) < 1e-9);
    }

    #[test]
    fn lae_matches_closed_form_for_orthonormal_atoms(seed in 0u64..10_000, ridge in 0.0f64..0.1) {
        let mut r = rng(seed);
        let d = orthonormal(48, 10, &mut r);
        let dict = Dictionary::new("p", d.clone()).unwrap();
        let f = build_annihilator(&dict).unwrap();
        let ls = LsOperator::new(&d, ridge).unwrap();
        let s = gaussian_vec(48, &mut r);
        // (DᵀD + λI)⁻¹ = I/(1+λ), so s − DLs = Fᵀ(Fs) + λ/(1+λ)·DDᵀs.
        let dts = norm_sq(&matvec(&d.transpose(), &s));
        let npe = residual_npe(&f, &s).unwrap().energy;
        let expected = npe + (ridge / (1.0 + ridge)).powi(2) * dts;
        for variant in [1, 2] {
            let lae = residual_lae(&dict, &ls, &s, variant).unwrap().energy;
            prop_assert!((lae - expected).abs() < 1e-9 * (1.0 + expected));
        }
        if ridge == 0.0 {
            prop_assert!((expected - npe).abs() < 1e-12);
        }
    }

    #[test]
    fn lasso_satisfies_kkt(seed in 0u64..10_000, lambda in 0.005f64..0.5) {
        let mut r = rng(seed);
        let d = random_dictionary(40, 10, &mut r);
        let s = gaussian_vec(40, &mut r);
        let code = admm_lasso(&d, &s, lambda, 500, 1e-6).unwrap();
        prop_assert!(code.converged);
        prop_assert!(kkt_violation(&d, &s, &code.coeffs, lambda) <= 1e-6);
    }

    #[test]
    fn lasso_zero_above_critical_lambda(seed in 0u64..10_000, factor in 1.0f64..5.0) {
        let mut r = rng(seed);
        let d = random_dictionary(40, 10, &mut r);
        let s = gaussian_vec(40, &mut r);
        let crit = 2.0 * matvec(&d.transpose(), &s).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let code = admm_lasso(&d, &s, crit * factor, 500, 1e-6).unwrap();
        prop_assert!(code.coeffs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sae_is_omp_residual(seed in 0u64..10_000, k in 1usize..6) {
        let mut r = rng(seed);
        let d = random_dictionary(32, 8, &mut r);
        let dict = Dictionary::new("p", d.clone()).unwrap();
        let s = gaussian_vec(32, &mut r);
        let code = omp(&d, &s, k);
        prop_assert!(code.nnz() <= k);
        let approx = matvec(&d, &code.coeffs);
        let expected: f64 = approx.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!((residual_sae(&dict, &s, k).unwrap().energy - expected).abs() < 1e-12);
    }

    #[test]
    fn auc_equals_pairwise_count(scores in prop::collection::vec(0u8..20, 4..60), labels in prop::collection::vec(any::<bool>(), 60)) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((auc(&scores, labels).unwrap() - wins / pairs).abs() < 1e-12);
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn omp_recovers_sparse_codes_on_incoherent_dictionaries() {
    let k = 5;
    for seed in 0..100 {
        let mut r = rng(seed);
        let d = incoherent_dictionary(128, 20, &mut r);
        // Exact recovery is guaranteed below this coherence.
        assert!(coherence(&d) < 1.0 / (2.0 * k as f64 - 1.0));
        let x = sparse_code(20, k, &mut r);
        let code = omp(&d, &matvec(&d, &x), k);
        let want: Vec<usize> = (0..20).filter(|&i| x[i] != 0.0).collect();
        assert_eq!(code.support(), want, "seed {seed}");
        assert!(max_diff(&code.coeffs, &x) < 1e-9, "seed {seed}");
    }
}

#[test]
fn flop_counters_match_the_published_formulas() {
    for big_n in [16usize, 64, 128, 256] {
        for n in [1usize, 5, 10, 20, big_n / 2, big_n - 1].into_iter().filter(|&n| n < big_n) {
            for k in [1usize, 3, 5, 8] {
                let (nf, af, kf) = (big_n as f64, n as f64, k as f64);
                let sae = 2.0 * nf * kf * (kf + 1.5) + 2.0 * kf * af * (nf + 1.0) + (2.0 * af + 1.0) * nf;
                assert_eq!(flops(ResidualKind::Sae, big_n, n, k) as f64, sae);
                assert_eq!(flops(ResidualKind::Npe, big_n, n, k) as f64, 2.0 * nf * (nf - af));
                assert_eq!(flops(ResidualKind::Lae1, big_n, n, k) as f64, 2.0 * nf * nf);
                assert_eq!(flops(ResidualKind::Lae2, big_n, n, k) as f64, (4.0 * af + 1.0) * nf);
            }
        }
    }
    assert_eq!(flops(ResidualKind::Npe, 128, 20, 5), 27648);
    assert_eq!(flops(ResidualKind::Lae2, 128, 20, 5), 10368);
    assert_eq!(flops(ResidualKind::Lae1, 128, 20, 5), 32768);
    assert_eq!(flops(ResidualKind::Sae, 128, 20, 5), 39368);
}

#[test]
fn learned_dictionary_is_valid_and_deterministic() {
    let mut r = rng(5);
    let basis = orthonormal(64, 6, &mut r);
    let codes = gaussian(6, 120, &mut r);
    let s = unit_columns(&basis * codes + gaussian(64, 120, &mut r) * 0.01);
    let cfg = DictionaryConfig { n_atoms: 8, iterations: 10, ..Default::default() };
    let a = learn_dictionary(&s, &cfg, "p").unwrap();
    let b = learn_dictionary(&s, &cfg, "p").unwrap();
    assert_eq!(a.dictionary, b.dictionary);
    assert!(a.objective.windows(2).all(|w| w[1] <= w[0]));
    for c in a.dictionary.atoms.column_iter() {
        assert!((c.norm() - 1.0).abs() < 1e-9);
    }
    // The learned span covers the generating subspace.
    let model = ResidualModel::new(a.dictionary, 1e-3, 5).unwrap();
    let e: f64 = s.column_iter().map(|c| model.energy(ResidualKind::Npe, c.as_slice()).unwrap()).sum::<f64>() / 120.0;
    assert!(e < 0.05, "mean NPE energy {e}");
}
