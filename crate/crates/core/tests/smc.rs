mod common;

use buckcal::smc::{
    adaptive_weight, baseline_weight, distance, initial_weights, init_threshold, next_threshold, normalize,
    quantile, smc_run_with, weighted_covariance, EngineConfig, PerturbationKernel, WeightScheme,
};
use buckcal::{Prior, PriorSet, Waveform};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn distance_matches_norm_oracle() {
    let mut r = rng(1);
    let k = 64;
    let t: Vec<f64> = (0..k).map(|i| i as f64 * 1e-6).collect();
    let mut draw = || (0..k).map(|_| r.random_range(-3.0..3.0)).collect::<Vec<f64>>();
    let z = Waveform::new(t.clone(), draw(), draw()).unwrap();
    let zs = Waveform::new(t, draw(), draw()).unwrap();
    let stacked: Vec<f64> = z.v_out.iter().chain(&z.i_out).copied().collect();
    let stacked_s: Vec<f64> = zs.v_out.iter().chain(&zs.i_out).copied().collect();
    let sq: f64 = stacked.iter().zip(&stacked_s).map(|(a, b)| (a - b) * (a - b)).sum();
    let oracle = sq.sqrt() / (2.0 * k as f64);
    assert!(rel(distance(&z, &zs).unwrap(), oracle) < 1e-12);
}

#[test]
fn distance_hand_cases() {
    let t = vec![0.0, 1.0];
    let a = Waveform::new(t.clone(), vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
    let b = Waveform::new(t, vec![0.0, 1.0], vec![2.0, 3.0]).unwrap();
    assert_eq!(distance(&a, &a).unwrap(), 0.0);
    assert_eq!(distance(&a, &b).unwrap(), 0.5);
    let shifted = Waveform::new(vec![0.0, 2.0], vec![0.0; 2], vec![0.0; 2]).unwrap();
    assert!(distance(&a, &shifted).is_err());
}

#[test]
fn reciprocal_weights_match_oracle() {
    let mut r = rng(2);
    let rhos: Vec<f64> = (0..50).map(|_| r.random_range(1e-4..1.0)).collect();
    let total: f64 = rhos.iter().map(|x| 1.0 / x).sum();
    let w = initial_weights(&rhos).unwrap();
    for (wi, rho) in w.iter().zip(&rhos) {
        assert!(rel(*wi, 1.0 / rho / total) < 1e-12);
    }
}

#[test]
fn adaptive_weight_cases() {
    assert!(rel(adaptive_weight(0.5, 2.0, 0.4), 0.5) < 1e-15);
    assert_eq!(adaptive_weight(0.7, 3.0, 1.0), 0.7);
    assert_eq!(adaptive_weight(0.7, 4.0, 0.0), 0.25);
}

#[test]
fn beta_limits_order_like_their_terms() {
    let mut r = rng(3);
    let pairs: Vec<(f64, f64)> = (0..50)
        .map(|_| (r.random_range(0.0..5.0), r.random_range(1e-3..1.0)))
        .collect();
    let argsort = |key: &dyn Fn(&(f64, f64)) -> f64| {
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.sort_by(|&a, &b| key(&pairs[a]).total_cmp(&key(&pairs[b])));
        idx
    };
    // beta = 0: ordering of 1/rho.
    assert_eq!(
        argsort(&|p| adaptive_weight(p.0, p.1, 0.0)),
        argsort(&|p| -p.1)
    );
    // beta = 1: ordering of the prior density.
    assert_eq!(argsort(&|p| adaptive_weight(p.0, p.1, 1.0)), argsort(&|p| p.0));
}

/// Density of `N(mean, cov)` in 2-D, written out by hand.
fn gauss2(x: &[f64], mean: &[f64], c: [[f64; 2]; 2]) -> f64 {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let inv = [
        [c[1][1] / det, -c[0][1] / det],
        [-c[1][0] / det, c[0][0] / det],
    ];
    let d = [x[0] - mean[0], x[1] - mean[1]];
    let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

#[test]
fn baseline_weight_matches_direct_sum() {
    let parents = vec![
        vec![1.0, 2.0],
        vec![1.5, 1.7],
        vec![0.8, 2.4],
        vec![1.2, 2.2],
        vec![1.1, 1.9],
    ];
    let w = [0.1, 0.3, 0.2, 0.25, 0.15];
    let kernel = PerturbationKernel::fit(&parents, &w).unwrap();

    // Hand covariance of the weighted parents, doubled.
    let m = [0, 1].map(|d| parents.iter().zip(&w).map(|(p, wi)| wi * p[d]).sum::<f64>());
    let mut g = [[0.0; 2]; 2];
    for (p, wi) in parents.iter().zip(&w) {
        for a in 0..2 {
            for b in 0..2 {
                g[a][b] += wi * (p[a] - m[a]) * (p[b] - m[b]);
            }
        }
    }
    let cov = [[2.0 * g[0][0], 2.0 * g[0][1]], [2.0 * g[1][0], 2.0 * g[1][1]]];

    let candidate = [1.3, 2.05];
    let prior = 0.37;
    let denom: f64 = parents
        .iter()
        .zip(&w)
        .map(|(p, wi)| wi * gauss2(&candidate, p, cov))
        .sum();
    let got = baseline_weight(prior, &parents, &w, &candidate, &kernel).unwrap();
    assert!(rel(got, prior / denom) < 1e-12, "{got} vs {}", prior / denom);

    // A single parent reduces to prior / kernel density.
    let one = baseline_weight(prior, &parents[..1], &[1.0], &candidate, &kernel).unwrap();
    assert!(rel(one, prior / kernel.density(&candidate, &parents[0])) < 1e-12);
}

#[test]
fn median_and_quantile_oracles() {
    let mut r = rng(4);
    let xs: Vec<f64> = (0..100).map(|_| r.random::<f64>()).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(init_threshold(&xs).unwrap(), 0.5 * (sorted[49] + sorted[50]));
    assert_eq!(init_threshold(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
    assert_eq!(init_threshold(&[0.3; 6]).unwrap(), 0.3);
    assert!(init_threshold(&[]).is_err());

    assert!(rel(quantile(&[1.0, 2.0, 3.0, 4.0], 0.75).unwrap(), 3.25) < 1e-15);
    assert!(rel(next_threshold(&[1.0, 2.0, 3.0, 4.0], 0.75, 5.0).unwrap(), 3.25) < 1e-15);
    assert!(rel(next_threshold(&[2.0; 5], 0.75, 2.0).unwrap(), 0.95 * 2.0) < 1e-15);
    // q near one gives the maximum unless that fails to decrease.
    assert!(rel(next_threshold(&[1.0, 2.0, 3.0, 4.0], 1.0 - 1e-12, 5.0).unwrap(), 4.0) < 1e-11);
    assert!(rel(next_threshold(&[1.0, 4.0, 4.0, 4.0], 0.75, 4.0).unwrap(), 3.8) < 1e-15);

    // Linear interpolation oracle on the 100 values.
    for q in [0.1f64, 0.25, 0.75, 0.9] {
        let h = 99.0 * q;
        let lo = h.floor() as usize;
        let oracle = sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo]);
        assert!(rel(quantile(&xs, q).unwrap(), oracle) < 1e-12);
    }
}

#[test]
fn weighted_covariance_matches_oracle() {
    let mut r = rng(5);
    let pts: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let w: Vec<f64> = (0..50).map(|_| r.random_range(0.1..1.0)).collect();
    let (mean, cov) = weighted_covariance(&pts, &w).unwrap();
    let total: f64 = w.iter().sum();
    for a in 0..3 {
        let m: f64 = pts.iter().zip(&w).map(|(p, wi)| wi * p[a]).sum::<f64>() / total;
        assert!(rel(mean[a], m) < 1e-12);
    }
    // Oracle via E[x x^T] - m m^T.
    for a in 0..3 {
        for b in 0..3 {
            let exy: f64 = pts.iter().zip(&w).map(|(p, wi)| wi * p[a] * p[b]).sum::<f64>() / total;
            let oracle = exy - mean[a] * mean[b];
            assert!((cov[(a, b)] - oracle).abs() < 1e-10 * oracle.abs().max(1e-3), "({a},{b})");
        }
    }
    let k = PerturbationKernel::fit(&pts, &w).unwrap();
    assert!((k.covariance() - &cov * 2.0).abs().max() < 1e-15);
}

#[test]
fn quadratic_stub_concentrates() {
    let theta = 3.7;
    let model = move |p: &[f64]| -> buckcal::Result<f64> { Ok((p[0] - theta).powi(2)) };
    let priors = PriorSet::new([("x", Prior::Uniform { low: 0.0, high: 10.0 })]).unwrap();
    let cfg = EngineConfig {
        n_particles: 500,
        t_max: 8,
        seed: 9,
        ..EngineConfig::default()
    };
    let res = smc_run_with(&cfg, &priors, &model, |_| {}).unwrap();
    let stds: Vec<f64> = res.populations.iter().map(|p| p.weighted_std()[0]).collect();
    assert_eq!(stds.len(), 8);
    for w in stds.windows(2) {
        assert!(w[1] < w[0], "{stds:?}");
    }
    let mean = res.final_population().weighted_mean()[0];
    assert!((mean - theta).abs() < 0.05, "{mean}");
}

#[test]
fn beta_zero_gives_reciprocal_weights_beta_one_uniform() {
    let model = |p: &[f64]| -> buckcal::Result<f64> { Ok((p[0] - 1.0).abs() + (p[1] - 2.0).abs()) };
    let priors = PriorSet::new([
        ("a", Prior::Uniform { low: 0.0, high: 4.0 }),
        ("b", Prior::Uniform { low: 0.0, high: 4.0 }),
    ])
    .unwrap();
    for beta in [0.0, 1.0] {
        let cfg = EngineConfig {
            n_particles: 200,
            t_max: 3,
            beta,
            seed: 4,
            ..EngineConfig::default()
        };
        let res = smc_run_with(&cfg, &priors, &model, |_| {}).unwrap();
        for pop in &res.populations[1..] {
            let w = pop.weights();
            let expect = if beta == 0.0 {
                initial_weights(&pop.discrepancies()).unwrap()
            } else {
                vec![1.0 / w.len() as f64; w.len()]
            };
            for (a, b) in w.iter().zip(&expect) {
                assert!(rel(*a, *b) < 1e-12);
            }
        }
    }
}

#[test]
fn huge_tolerance_returns_prior_draws() {
    let model = |p: &[f64]| -> buckcal::Result<f64> { Ok(p[0] + p[1]) };
    let priors = PriorSet::new([
        ("u", Prior::Uniform { low: 1.0, high: 3.0 }),
        ("g", Prior::Gaussian { mean: 0.5, var: 8.0 }),
    ])
    .unwrap();
    let cfg = EngineConfig {
        n_particles: 1000,
        epsilon_min: 1e12,
        seed: 21,
        ..EngineConfig::default()
    };
    let res = smc_run_with(&cfg, &priors, &model, |_| {}).unwrap();
    assert_eq!(res.populations.len(), 1);
    let pop = res.final_population();
    let mut r = rng(777);
    let direct: Vec<Vec<f64>> = (0..1000).map(|_| priors.sample_values(&mut r)).collect();
    for d in 0..2 {
        let a: Vec<f64> = pop.particles.iter().map(|p| p.params[d]).collect();
        let b: Vec<f64> = direct.iter().map(|x| x[d]).collect();
        let stat = common::ks_statistic(&a, &b);
        assert!(common::ks_p_value(stat, 1000, 1000) > 0.01, "dim {d}: D = {stat}");
    }
}

#[test]
fn baseline_first_generation_is_uniform() {
    let model = |p: &[f64]| -> buckcal::Result<f64> { Ok(p[0]) };
    let priors = PriorSet::new([("u", Prior::Uniform { low: 0.0, high: 1.0 })]).unwrap();
    let cfg = EngineConfig {
        n_particles: 50,
        t_max: 2,
        weight_scheme: WeightScheme::Baseline,
        ..EngineConfig::default()
    };
    let res = smc_run_with(&cfg, &priors, &model, |_| {}).unwrap();
    assert!(res.populations[0].weights().iter().all(|w| (w - 0.02).abs() < 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_weights_sum_to_one(w in prop::collection::vec(1e-6f64..1e6, 1..60)) {
        let mut w = w;
        normalize(&mut w).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn next_threshold_strictly_decreases(
        rhos in prop::collection::vec(0.0f64..10.0, 1..60),
        q in 0.01f64..0.99,
        current in 1e-3f64..20.0,
    ) {
        let rhos: Vec<f64> = rhos.into_iter().map(|r| r.min(current)).collect();
        let next = next_threshold(&rhos, q, current).unwrap();
        prop_assert!(next < current);
        prop_assert!(next >= 0.0);
    }

    #[test]
    fn quantile_within_range(xs in prop::collection::vec(-5.0f64..5.0, 1..60), q in 0.0f64..=1.0) {
        let v = quantile(&xs, q).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo && v <= hi);
    }

    #[test]
    fn distance_is_symmetric_and_nonnegative(
        a in prop::collection::vec(-10.0f64..10.0, 8),
        b in prop::collection::vec(-10.0f64..10.0, 8),
    ) {
        let t: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let za = Waveform::new(t.clone(), a[..4].to_vec(), a[4..].to_vec()).unwrap();
        let zb = Waveform::new(t, b[..4].to_vec(), b[4..].to_vec()).unwrap();
        let d1 = distance(&za, &zb).unwrap();
        let d2 = distance(&zb, &za).unwrap();
        prop_assert!(d1 >= 0.0);
        prop_assert_eq!(d1, d2);
    }

    #[test]
    fn prior_samples_stay_in_support(seed in any::<u64>(), low in 0.0f64..5.0, width in 1e-6f64..5.0) {
        let priors = PriorSet::new([
            ("u", Prior::Uniform { low, high: low + width }),
            ("g", Prior::Gaussian { mean: -1.0, var: 0.5 }),
        ]).unwrap();
        let mut r = rng(seed);
        for _ in 0..20 {
            let v = priors.sample_values(&mut r);
            prop_assert!(v[0] >= low && v[0] <= low + width);
            prop_assert!(v[1] >= 0.0);
            prop_assert!(priors.density_values(&v) > 0.0);
        }
    }
}
