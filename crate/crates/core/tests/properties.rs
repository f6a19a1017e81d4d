use proptest::prelude::*;
use sppm_core::engine::{self, default_x0};
use sppm_core::numerics::dist_sq;
use sppm_core::theory::{self, RateConstants};
use sppm_core::{CorrectionStrategy, LambdaRule, MethodSpec, RegressionProblem, Sampler};

fn instance(n: usize, d: usize, seed: u64, constant: bool) -> RegressionProblem {
    let rule = if constant {
        LambdaRule::Constant(0.3)
    } else {
        LambdaRule::PowersOfTwo
    };
    RegressionProblem::synthetic(n, d, seed, rule).unwrap()
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prox_contracts_by_one_plus_gamma_mu(
        (n, d) in (1usize..8, 1usize..6),
        seed in 0u64..1000,
        constant in any::<bool>(),
        log_gamma in -4.0..4.0f64,
        xy in (point(5), point(5)),
    ) {
        let p = instance(n, d, seed, constant);
        let gamma = 10f64.powf(log_gamma);
        let (x, y) = (&xy.0[..d], &xy.1[..d]);
        for i in 0..n {
            let px = p.prox_single(i, gamma, x).unwrap();
            let py = p.prox_single(i, gamma, y).unwrap();
            let q = (1.0 + gamma * p.mu_i(i)).powi(2);
            prop_assert!(dist_sq(&px, &py) * q <= dist_sq(x, y) * (1.0 + 1e-10) + 1e-20);
        }
    }

    #[test]
    fn offset_prox_matches_plain_prox(
        (n, d) in (1usize..8, 1usize..6),
        seed in 0u64..1000,
        log_gamma in -3.0..3.0f64,
        u in point(5),
    ) {
        let p = instance(n, d, seed, false);
        let c = p.constants().unwrap();
        let gamma = 10f64.powf(log_gamma);
        let u = &u[..d];
        let x: Vec<f64> = c.x_star.iter().zip(u).map(|(a, b)| a + b).collect();
        for i in 0..n {
            let plain = p.prox_single(i, gamma, &x).unwrap();
            let off = p.prox_single_offset(i, gamma, &c.grad_at_star[i], u).unwrap();
            for ((a, b), s) in plain.iter().zip(&off).zip(&c.x_star) {
                prop_assert!((a - (b + s)).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn nice_sampling_is_a_distribution_with_unbiased_weights(n in 1usize..9, tau_frac in 0.0..1.0f64) {
        let tau = 1 + ((n - 1) as f64 * tau_frac) as usize;
        let s = Sampler::nice(n, tau).unwrap();
        let total: f64 = s.inclusion_probs().iter().sum();
        prop_assert!((total - tau as f64).abs() < 1e-12);
        let support = s.enumerate_support().unwrap();
        let mass: f64 = support.iter().map(|(_, q)| q).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        for i in 0..n {
            prop_assert!((s.weight(i) * n as f64 * s.inclusion_probs()[i] - 1.0).abs() < 1e-12);
            let hit: f64 = support.iter().filter(|(c, _)| c.contains(&i)).map(|(_, q)| q).sum();
            prop_assert!((hit - s.inclusion_probs()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn block_sampling_inclusion_matches_block_mass(
        n in 2usize..12,
        b_frac in 0.0..1.0f64,
        raw in prop::collection::vec(0.1..1.0f64, 12),
    ) {
        let b = 1 + ((n - 1) as f64 * b_frac) as usize;
        let blocks = Sampler::contiguous_blocks(n, b);
        let mass: f64 = raw[..b].iter().sum();
        let probs: Vec<f64> = raw[..b].iter().map(|r| r / mass).collect();
        let s = Sampler::block(n, blocks.clone(), probs.clone()).unwrap();
        for (blk, q) in blocks.iter().zip(&probs) {
            for &i in blk {
                prop_assert!((s.inclusion_probs()[i] - q).abs() < 1e-12);
            }
        }
        let strat = Sampler::stratified(n, blocks.clone()).unwrap();
        let total: f64 = strat.inclusion_probs().iter().sum();
        prop_assert!((total - b as f64).abs() < 1e-12);
    }

    #[test]
    fn sppm_certificate_trades_rate_for_neighborhood(
        mu in 0.01..10.0f64,
        sigma in 0.0..10.0f64,
        g1 in -3.0..2.0f64,
        step in 0.01..1.0f64,
    ) {
        let rc = RateConstants { mu, sigma_sq: Some(sigma), delta: None, nu: None, n: None };
        let params = theory::method_params(CorrectionStrategy::None, &rc).unwrap();
        let (lo, hi) = (10f64.powf(g1), 10f64.powf(g1 + step));
        let a = theory::certificate(&params, lo, 1.0, mu).unwrap();
        let b = theory::certificate(&params, hi, 1.0, mu).unwrap();
        prop_assert!(b.theta < a.theta);
        prop_assert!(b.neighborhood >= a.neighborhood * (1.0 - 1e-12));
    }

    #[test]
    fn gc_certificate_needs_gamma_below_threshold(
        mu in 0.1..5.0f64,
        ratio in 0.0..3.0f64,
        log_gamma in -3.0..3.0f64,
    ) {
        let delta = mu * ratio;
        let rc = RateConstants { mu, sigma_sq: Some(0.0), delta: Some(delta), nu: None, n: None };
        let gamma = 10f64.powf(log_gamma);
        let params = theory::method_params(CorrectionStrategy::Gc, &rc).unwrap();
        let valid = theory::certificate(&params, gamma, 1.0, mu).is_ok();
        // (1+γ²δ²) < (1+γμ)²  ⇔  γ(δ² − μ²) < 2μ
        let expected = gamma * (delta * delta - mu * mu) < 2.0 * mu;
        let edge = (gamma * (delta * delta - mu * mu) - 2.0 * mu).abs() < 1e-9 * (1.0 + gamma);
        prop_assert!(edge || valid == expected);
    }

    #[test]
    fn trajectories_are_reproducible_and_start_at_ten(seed in 0u64..1000, run in 0u64..50, lsvrp in any::<bool>()) {
        let p = instance(6, 3, 11, false);
        let c = p.constants().unwrap();
        let strategy = if lsvrp { CorrectionStrategy::Lsvrp { p: 0.3 } } else { CorrectionStrategy::Gc };
        let spec = MethodSpec::new(strategy, Sampler::uniform(6), 0.2, 40, Some(1.0)).unwrap();
        let x0 = default_x0(&c.x_star);
        let a = engine::run(&spec, &p, &c, &x0, seed, run).unwrap();
        let b = engine::run(&spec, &p, &c, &x0, seed, run).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((a.sq_dist[0] - 100.0).abs() < 1e-9);
        prop_assert!(a.lyapunov.unwrap().iter().zip(&a.sq_dist).all(|(l, s)| l >= s));
    }
}
