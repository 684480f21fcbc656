//! Analytic gradients against central finite differences on small random
//! networks.

mod common;

use common::{gradient_errors, inverse_variance_ratio};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdl_core::gaussian::DiagGaussian;
use tdl_core::neural::PolicyHeads;

const REL_TOL: f64 = 1e-5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradients_match_differences(seed in any::<u64>()) {
        let e = gradient_errors(seed);
        prop_assert!(e.max() < REL_TOL, "{e:?}");
    }
}

#[test]
fn state_independent_head_has_no_std_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = PolicyHeads::new(2, 1, &[4], 0.5, 0.0, &mut rng).unwrap();
    assert!(p.backward_std_mse(&[0.0, 0.0], &[1.0], 1).unwrap().is_none());
}

#[test]
fn mean_gradient_scales_with_inverse_variance() {
    for seed in 0..20 {
        let ratio = inverse_variance_ratio(seed);
        assert!((ratio / 100.0 - 1.0).abs() < 0.01, "ratio {ratio}");
    }
}

#[test]
fn log_prob_matches_closed_form() {
    let d = DiagGaussian::new(vec![0.5, -1.0], vec![2.0, 0.5]).unwrap();
    let z = [(1.0 - 0.5) / 2.0, (0.0 + 1.0) / 0.5];
    let expect: f64 = z
        .iter()
        .zip([2.0f64, 0.5])
        .map(|(z, s)| -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
        .sum();
    assert!((d.log_prob(&[1.0, 0.0]) - expect).abs() < 1e-12);
}
