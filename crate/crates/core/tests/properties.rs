//! Property checks of invariants across modules, each against an independent
//! computation.

mod common;

use common::gae_double_sum;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdl_core::advantage::gae;
use tdl_core::analysis::{eval_g_with, FitnessSpec, NoiseDraws};
use tdl_core::config::RunConfig;
use tdl_core::diagnostics::quantile;
use tdl_core::gaussian::{kl_divergence, relative_offset, DiagGaussian, UnitNoise};
use tdl_core::targets::{
    compose_std, revise_noise, state_independent_target, target_mean_direct, target_mean_es,
    AdvantageGate,
};

fn gaussian(d: usize) -> impl Strategy<Value = DiagGaussian> {
    (prop::collection::vec(-5.0f64..5.0, d), prop::collection::vec(0.05f64..5.0, d))
        .prop_map(|(m, s)| DiagGaussian::new(m, s).unwrap())
}

#[test]
fn gae_recursion_equals_double_sum_for_all_short_lengths() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for len in 1..=10 {
        for _ in 0..200 {
            let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
            let values: Vec<f64> = (0..=len).map(|_| rng.random_range(-10.0..10.0)).collect();
            let gamma = rng.random_range(0.0..=1.0);
            let lambda = rng.random_range(0.0..=1.0);
            let fast = gae(&rewards, &values, gamma, lambda).unwrap();
            let slow = gae_double_sum(&rewards, &values, gamma, lambda);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10, "len {len}: {a} vs {b}");
            }
        }
    }
}

proptest! {
    #[test]
    fn gae_matches_oracle(
        rewards in prop::collection::vec(-100.0f64..100.0, 1..=10),
        seed in any::<u64>(),
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..=rewards.len()).map(|_| rng.random_range(-100.0..100.0)).collect();
        let fast = gae(&rewards, &values, gamma, lambda).unwrap();
        let slow = gae_double_sum(&rewards, &values, gamma, lambda);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(d in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let m = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            DiagGaussian::new(m, s).unwrap()
        };
        let (p, q) = (draw(), draw());
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn relative_offset_round_trips(old in gaussian(3), new in gaussian(3)) {
        let rel = relative_offset(&old, &new).unwrap();
        let back = rel.apply(&old).unwrap();
        for (a, b) in back.mean().iter().zip(new.mean()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in back.std().iter().zip(new.std()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_is_invariant_to_shared_shift_and_scale(
        old in gaussian(2), new in gaussian(2), shift in -10.0f64..10.0, scale in 0.1f64..10.0,
    ) {
        let tf = |g: &DiagGaussian| {
            DiagGaussian::new(
                g.mean().iter().map(|m| scale * m + shift).collect(),
                g.std().iter().map(|s| scale * s).collect(),
            ).unwrap()
        };
        let a = kl_divergence(&old, &new).unwrap();
        let b = kl_divergence(&tf(&old), &tf(&new)).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a));
    }

    #[test]
    fn direct_offset_stays_inside_trust_region(
        old in gaussian(4), y in prop::collection::vec(-6.0f64..6.0, 4),
        adv in -5.0f64..5.0, alpha in 0.001f64..0.2,
    ) {
        for gate in [AdvantageGate::Sign, AdvantageGate::Indicator] {
            let mu = target_mean_direct(&old, &UnitNoise(y.clone()), adv, alpha, gate);
            let r2: f64 = mu.iter().zip(old.mean()).zip(old.std())
                .map(|((n, o), s)| ((n - o) / s).powi(2)).sum();
            prop_assert!(r2 <= 2.0 * alpha * (1.0 + 1e-12));
        }
    }

    #[test]
    fn non_positive_advantage_keeps_mean_under_indicator(
        old in gaussian(3), y in prop::collection::vec(-3.0f64..3.0, 3),
        adv in -5.0f64..=0.0, alpha in 0.001f64..0.2, nu in 0.1f64..2.0,
    ) {
        let noise = UnitNoise(y);
        let action = old.action_for(&noise);
        let direct = target_mean_direct(&old, &noise, adv, alpha, AdvantageGate::Indicator);
        let es = target_mean_es(&old, &action, adv, nu, AdvantageGate::Indicator);
        prop_assert_eq!(&direct, &old.mean().to_vec());
        prop_assert_eq!(&es, &old.mean().to_vec());
    }

    #[test]
    fn revising_identical_good_window_is_identity(
        y in prop::collection::vec(-3.0f64..3.0, 1..4), adv in 0.01f64..5.0,
        len in 1usize..6, r in 0.0f64..=1.0,
    ) {
        let noise = UnitNoise(y);
        let window: Vec<(&UnitNoise, f64)> = (0..len).map(|_| (&noise, adv)).collect();
        let out = revise_noise(&window, len / 2, r);
        for (a, b) in out.as_slice().iter().zip(noise.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn global_target_is_rms_of_samples(
        samples in prop::collection::vec(prop::collection::vec(0.0f64..4.0, 2), 1..20),
    ) {
        let g = state_independent_target(&samples).unwrap();
        for k in 0..2 {
            let rms = (samples.iter().map(|s| s[k] * s[k]).sum::<f64>() / samples.len() as f64).sqrt();
            prop_assert!((g[k] - rms).abs() < 1e-12);
        }
    }

    #[test]
    fn composed_std_lies_between_components(
        g in prop::collection::vec(0.01f64..5.0, 3), s in prop::collection::vec(0.01f64..5.0, 3),
        varphi in 0.0f64..10.0,
    ) {
        let c = compose_std(&g, &s, varphi).unwrap();
        for k in 0..3 {
            let (lo, hi) = (g[k].min(s[k]), g[k].max(s[k]));
            prop_assert!(c[k] >= lo * (1.0 - 1e-12) && c[k] <= hi * (1.0 + 1e-12));
            let expect = (g[k].ln() / (varphi + 1.0) + s[k].ln() * varphi / (varphi + 1.0)).exp();
            prop_assert!((c[k] - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn raising_v_never_raises_g(mu in -2.0f64..2.0, sigma in 0.1f64..3.0, v1 in -3.0f64..1.0, dv in 0.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = NoiseDraws::draw(1, 2000, &mut rng);
        for spec_of in [FitnessSpec::quadratic, FitnessSpec::half_line, FitnessSpec::double_well] {
            let lo = eval_g_with(&spec_of(v1), &[mu], &[sigma], &draws);
            let hi = eval_g_with(&spec_of(v1 + dv), &[mu], &[sigma], &draws);
            prop_assert!(hi.value <= lo.value);
        }
    }

    #[test]
    fn quantiles_are_monotone(vals in prop::collection::vec(-1e3f64..1e3, 1..50), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&vals, lo) <= quantile(&vals, hi));
    }

    #[test]
    fn config_text_round_trips(
        steps in 1usize..5000, epochs in 1usize..100, lr in 1e-6f64..1.0,
        alpha in 1e-4f64..0.5, gamma in 0.0f64..1.0, seeds in prop::collection::vec(0u64..1000, 1..5),
    ) {
        let mut cfg = RunConfig { steps, epochs, lr, gamma, seeds, ..RunConfig::default() };
        cfg.minibatch = cfg.minibatch.min(steps);
        cfg.tdl.alpha = alpha;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
