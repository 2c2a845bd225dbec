mod common;

use dlc_core::autodiff::check_gradient;
use dlc_core::convexify::{
    dlc_builder, dlc_loss, dlc_loss_with_samples, hinge_con1, hinge_con2, hinge_con3, interpolate, sample_neighborhood,
    DlcConfig, Layout, NeighborhoodSampler, PredictionVector, SamplerMode,
};
use dlc_core::tasks::oracles::{AnalyticOracle, OracleKind};
use dlc_core::tasks::{generate_registration_dataset, value_and_grad, RegistrationDataConfig, RegistrationTask, Task};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn free(v: Vec<f64>) -> PredictionVector {
    let n = v.len();
    PredictionVector::new(v, Layout::free(n)).unwrap()
}

#[test]
fn interpolation_endpoints_and_midpoint() {
    let a = free(vec![0.0, 0.0]);
    let b = free(vec![2.0, 4.0]);
    assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
    assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
    assert_eq!(interpolate(&a, &b, 0.5).unwrap().values(), &[1.0, 2.0]);
    assert!(interpolate(&a, &free(vec![1.0]), 0.5).is_err());
    assert!(interpolate(&a, &b, 1.5).is_err());
}

#[test]
fn interpolation_preserves_simplex() {
    let l = Layout::probabilities(3);
    let p = PredictionVector::new(vec![1.0, 0.0, 0.0], l.clone()).unwrap();
    let q = PredictionVector::new(vec![0.2, 0.3, 0.5], l).unwrap();
    let m = interpolate(&p, &q, 0.3).unwrap();
    assert!((m.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn hinges_match_bisection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let hs: f64 = rng.random_range(-10.0..10.0);
        let ho: f64 = rng.random_range(-10.0..10.0);
        let ht: f64 = rng.random_range(-10.0..10.0);
        let lam: f64 = rng.random_range(0.0..=1.0);
        let mu: f64 = rng.random_range(0.0..5.0);
        let d2: f64 = rng.random_range(0.0..5.0);
        worst = worst.max((hinge_con1(hs, ht).unwrap() - common::brute_con1(hs, ht)).abs());
        worst = worst.max((hinge_con2(hs, ho, d2, mu).unwrap() - common::brute_con2(hs, ho, d2, mu)).abs());
        worst = worst.max((hinge_con3(ht, hs, ho, lam, d2, mu).unwrap() - common::brute_con3(ht, hs, ho, lam, d2, mu)).abs());
    }
    assert!(worst <= 1e-12, "max deviation {worst}");
}

#[test]
fn vanishing_sigma_returns_ground_truth() {
    let star = free(vec![0.3, -1.2, 2.0]);
    let s = NeighborhoodSampler::gaussian(vec![1e-12]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for w in sample_neighborhood(&star, &s, 10, &mut rng).unwrap() {
        assert!(w.squared_distance(&star).sqrt() < 1e-9);
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let star = free(vec![0.1, 0.2]);
    let s = NeighborhoodSampler::gaussian(vec![0.5]).unwrap();
    let a = sample_neighborhood(&star, &s, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let b = sample_neighborhood(&star, &s, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(a, b);
    assert!(sample_neighborhood(&star, &s, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn gaussian_sampler_moments() {
    let star = free(vec![0.5, -2.0]);
    let sigma = 0.7;
    let s = NeighborhoodSampler::gaussian(vec![sigma]).unwrap();
    let n = 100_000;
    let draws = sample_neighborhood(&star, &s, n, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    for j in 0..2 {
        let xs: Vec<f64> = draws.iter().map(|w| w.values()[j]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - star.values()[j]).abs() < 4.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((var.sqrt() - sigma).abs() < 0.02 * sigma, "std {}", var.sqrt());
    }
}

#[test]
fn noisy_one_hot_sampler_yields_distributions() {
    let star = PredictionVector::new(vec![0.0, 1.0, 0.0], Layout::probabilities(3)).unwrap();
    let s = NeighborhoodSampler::new(vec![1.0], SamplerMode::NoisyOneHotSoftmax).unwrap();
    for w in sample_neighborhood(&star, &s, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap() {
        assert!((w.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.values().iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn nonpositive_sigma_rejected() {
    assert!(NeighborhoodSampler::gaussian(vec![0.0]).is_err());
    assert!(NeighborhoodSampler::gaussian(vec![-1.0]).is_err());
}

#[test]
fn invalid_dlc_configs_rejected() {
    for cfg in [
        DlcConfig { lambda: 1.5, ..DlcConfig::default() },
        DlcConfig { mu: -1.0, ..DlcConfig::default() },
        DlcConfig { rho: -0.1, ..DlcConfig::default() },
        DlcConfig { n_samples: 0, ..DlcConfig::default() },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

#[test]
fn quadratic_oracle_has_zero_objective() {
    let c = vec![0.4, -0.8];
    let task = AnalyticOracle::new(OracleKind::Quadratic, c.clone());
    let cfg = DlcConfig { mu: 1.0, n_samples: 5, ..DlcConfig::default() };
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = dlc_loss(&task, &(), &free(c.clone()), &task.init_params(&mut rng), &cfg, &mut rng).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.diagnostics.iter().all(|h| h.sum() == 0.0));
    }
}

#[test]
fn concave_oracle_forced_sample() {
    let task = AnalyticOracle::new(OracleKind::Concave, vec![0.0]);
    let cfg = DlcConfig { lambda: 0.5, mu: 0.0, rho: 1.0, n_samples: 1, ..DlcConfig::default() };
    let out = dlc_loss_with_samples(&task, &(), &free(vec![0.0]), &Default::default(), &cfg, &[vec![2.0]]).unwrap();
    // h = -w^2: h(w*) = 0, h(w) = -4, h(w~ = 1) = -1
    let eps = (0.0f64 - -1.0).max(0.0);
    let gamma = (0.0f64 - -4.0).max(0.0);
    let xi = (-1.0f64 - (0.5 * 0.0 + 0.5 * -4.0)).max(0.0);
    assert_eq!(out.base, 0.0);
    assert_eq!(out.loss, eps + gamma + xi);
    assert_eq!(out.loss, 6.0);
    let h = &out.diagnostics[0];
    assert_eq!((h.epsilon, h.gamma, h.xi), (1.0, 4.0, 1.0));
    assert_eq!(h.omega_tilde.values(), &[1.0]);
}

fn small_registration() -> (RegistrationTask, Vec<dlc_core::tasks::PointCloudPair>) {
    let task = RegistrationTask { dim: 2, width: 6, feat_dim: 3, ..RegistrationTask::default() };
    let data = generate_registration_dataset(&RegistrationDataConfig { n_pairs: 3, n_points: 8, jitter_sigma: 0.01, ..Default::default() })
        .unwrap();
    (task, data)
}

#[test]
fn rho_zero_reduces_to_task_loss_bitwise() {
    let (task, data) = small_registration();
    let params = task.init_params(&mut ChaCha8Rng::seed_from_u64(3));
    let cfg = DlcConfig { rho: 0.0, ..DlcConfig::default() };
    for pair in &data {
        let out = dlc_loss(&task, pair, &pair.omega_star, &params, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (plain, grads) = value_and_grad(&task, pair, &params, pair.omega_star.values()).unwrap();
        assert_eq!(out.loss.to_bits(), plain.to_bits());
        for (name, g) in &grads.params {
            let a: Vec<u64> = g.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = out.grads.param(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{name}");
        }
    }
}

#[test]
fn dlc_gradient_matches_finite_differences() {
    let (task, data) = small_registration();
    let params = task.init_params(&mut ChaCha8Rng::seed_from_u64(4));
    let cfg = DlcConfig::registration_preset();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for pair in &data {
        let samples: Vec<Vec<f64>> = sample_neighborhood(&pair.omega_star, &task.default_sampler(), 3, &mut rng)
            .unwrap()
            .into_iter()
            .map(|p| p.into_values())
            .collect();
        let report =
            check_gradient(dlc_builder(&task, pair, &samples, &cfg), &params, pair.omega_star.values(), 1e-6, 1e-4).unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }
}

#[test]
fn trainable_lambda_mu_gradient() {
    let (task, data) = small_registration();
    let mut params = task.init_params(&mut ChaCha8Rng::seed_from_u64(4));
    let cfg = DlcConfig { trainable: true, mu: 2.0, lambda: 0.3, ..DlcConfig::default() };
    cfg.add_trainable_params(&mut params).unwrap();
    let (l, m) = cfg.effective_lambda_mu(&params);
    assert!((l - 0.3).abs() < 1e-12 && (m - 2.0).abs() < 1e-12);
    let samples = vec![vec![0.4, 0.2, -0.3], vec![-0.5, 0.1, 0.6]];
    let pair = &data[0];
    let report = check_gradient(dlc_builder(&task, pair, &samples, &cfg), &params, pair.omega_star.values(), 1e-6, 1e-4).unwrap();
    assert!(report.passed, "max rel error {}", report.max_rel_error);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hinges_are_nonnegative(hs in -1e3..1e3f64, ho in -1e3..1e3f64, ht in -1e3..1e3f64,
                              lam in 0.0..=1.0f64, mu in 0.0..10.0f64, d2 in 0.0..100.0f64) {
        prop_assert!(hinge_con1(hs, ht).unwrap() >= 0.0);
        prop_assert!(hinge_con2(hs, ho, d2, mu).unwrap() >= 0.0);
        prop_assert!(hinge_con3(ht, hs, ho, lam, d2, mu).unwrap() >= 0.0);
    }

    #[test]
    fn strongly_star_convex_quadratics_have_no_violations(a in 0.1..5.0f64, frac in 0.0..1.0f64, lam in 0.0..=1.0f64,
                                                         seed in 0u64..1000) {
        let c = vec![0.3, -0.6, 1.1];
        let task = AnalyticOracle::new(OracleKind::ScaledQuadratic { a }, c.clone());
        // mu strictly below the true constant 2a: every hinge is exactly zero
        let cfg = DlcConfig { lambda: lam, mu: 2.0 * a * frac, n_samples: 4, ..DlcConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = dlc_loss(&task, &(), &free(c.clone()), &Default::default(), &cfg, &mut rng).unwrap();
        for h in &out.diagnostics {
            prop_assert_eq!(h.epsilon, 0.0);
            // gap for con2/con3 is (2a - mu)/2 * d2 >= 0 up to rounding of the terms
            let scale = a * h.omega_sample.squared_distance(&free(c.clone())).max(1.0);
            prop_assert!(h.gamma <= 1e-14 * scale && h.xi <= 1e-14 * scale, "{:?}", h);
        }
    }
}
