//! Diagonal Gaussian action distributions.
//!
//! Standard deviations are stored directly. Network heads that work in
//! log-std space exponentiate before building a [`DiagGaussian`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TdlError};

/// A standard-normal draw `y ~ N(0, I)`.
///
/// Actions are produced as `mean + y * std`, and the same `y` is kept around
/// so the target rules can reuse it exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitNoise(pub Vec<f64>);

impl UnitNoise {
    pub fn draw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        UnitNoise((0..dim).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        UnitNoise(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(TdlError::DimensionMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(TdlError::InvalidDistribution(format!(
                "non-finite mean {mean:?}"
            )));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(TdlError::InvalidDistribution(format!(
                "std must be finite and positive, got {std:?}"
            )));
        }
        Ok(DiagGaussian { mean, std })
    }

    /// Builds from a mean and per-dimension log standard deviations.
    pub fn from_log_std(mean: Vec<f64>, log_std: &[f64]) -> Result<Self> {
        let std = log_std.iter().map(|l| l.exp()).collect();
        Self::new(mean, std)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, UnitNoise) {
        let noise = UnitNoise::draw(self.dim(), rng);
        (self.action_for(&noise), noise)
    }

    /// `mean + y * std` for a given noise draw.
    pub fn action_for(&self, noise: &UnitNoise) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(&noise.0)
            .map(|((m, s), y)| m + y * s)
            .collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> f64 {
        debug_assert_eq!(action.len(), self.dim());
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        self.mean
            .iter()
            .zip(&self.std)
            .zip(action)
            .map(|((m, s), a)| {
                let z = (a - m) / s;
                -0.5 * z * z - s.ln() - half_log_2pi
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        let c = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
        self.std.iter().map(|s| s.ln() + c).sum()
    }
}

/// The new distribution expressed relative to the old one: mean offset in
/// units of old std and the per-dimension std ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeOffset {
    pub mu_rel: Vec<f64>,
    pub sigma_rel: Vec<f64>,
}

impl RelativeOffset {
    /// Rebuilds the new distribution from the old one.
    pub fn apply(&self, old: &DiagGaussian) -> Result<DiagGaussian> {
        if self.mu_rel.len() != old.dim() {
            return Err(TdlError::DimensionMismatch {
                expected: old.dim(),
                got: self.mu_rel.len(),
            });
        }
        let mean = old
            .mean
            .iter()
            .zip(&old.std)
            .zip(&self.mu_rel)
            .map(|((m, s), r)| m + r * s)
            .collect();
        let std = old
            .std
            .iter()
            .zip(&self.sigma_rel)
            .map(|(s, r)| s * r)
            .collect();
        DiagGaussian::new(mean, std)
    }

    /// `1/2 * sum(2 ln s + (1 + m^2) / s^2 - 1)`.
    pub fn kl(&self) -> f64 {
        0.5 * self
            .mu_rel
            .iter()
            .zip(&self.sigma_rel)
            .map(|(m, s)| 2.0 * s.ln() + (1.0 + m * m) / (s * s) - 1.0)
            .sum::<f64>()
    }
}

pub fn relative_offset(old: &DiagGaussian, new: &DiagGaussian) -> Result<RelativeOffset> {
    check_same_dim(old, new)?;
    let mu_rel = new
        .mean
        .iter()
        .zip(&old.mean)
        .zip(&old.std)
        .map(|((n, o), s)| (n - o) / s)
        .collect();
    let sigma_rel = new.std.iter().zip(&old.std).map(|(n, o)| n / o).collect();
    Ok(RelativeOffset { mu_rel, sigma_rel })
}

/// `KL(old || new)` in closed form.
pub fn kl_divergence(old: &DiagGaussian, new: &DiagGaussian) -> Result<f64> {
    // Clamp tiny negative rounding noise.
    Ok(relative_offset(old, new)?.kl().max(0.0))
}

fn check_same_dim(a: &DiagGaussian, b: &DiagGaussian) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(TdlError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(mean: &[f64], std: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), std.to_vec()).unwrap()
    }

    #[test]
    fn sample_with_forced_noise() {
        assert_eq!(g(&[0.0], &[1.0]).action_for(&UnitNoise(vec![0.0])), vec![0.0]);
        assert_eq!(g(&[2.0], &[0.5]).action_for(&UnitNoise(vec![1.0])), vec![2.5]);
    }

    #[test]
    fn sample_mean_converges() {
        let d = g(&[1.0], &[2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (a, y) = d.sample(&mut rng);
            assert_eq!(a[0], 1.0 + 2.0 * y.0[0]);
            sum += a[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * 2.0 / 1000.0, "{mean}");
    }

    #[test]
    fn log_prob_examples() {
        let half = 0.5 * (2.0 * PI).ln();
        assert!((g(&[0.0], &[1.0]).log_prob(&[0.0]) + half).abs() < 1e-12);
        assert!((g(&[0.0], &[1.0]).log_prob(&[0.0]) - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        assert!((g(&[0.0, 0.0], &[1.0, 1.0]).log_prob(&[0.0, 0.0]) + 2.0 * half).abs() < 1e-12);
        let v = g(&[1.0], &[2.0]).log_prob(&[3.0]);
        assert!((v - (-half - 2f64.ln() - 0.5)).abs() < 1e-12);
        assert!((v - (-2.112_085_713_764_618)).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let p = g(&[0.3, -1.0], &[0.5, 2.0]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let v = kl_divergence(&g(&[0.0], &[1.0]), &g(&[0.0], &[2.0])).unwrap();
        assert!((v - (2f64.ln() + 0.125 - 0.5)).abs() < 1e-12);
        let v = kl_divergence(&g(&[0.0], &[1.0]), &g(&[0.1f64.sqrt()], &[1.0])).unwrap();
        assert!((v - 0.05).abs() < 1e-12);
    }

    #[test]
    fn kl_dimension_mismatch_is_error() {
        let r = kl_divergence(&g(&[0.0], &[1.0]), &g(&[0.0, 0.0], &[1.0, 1.0]));
        assert!(matches!(r, Err(TdlError::DimensionMismatch { .. })));
    }

    #[test]
    fn relative_offset_examples() {
        let p = g(&[0.5], &[1.5]);
        let r = relative_offset(&p, &p).unwrap();
        assert_eq!((r.mu_rel, r.sigma_rel), (vec![0.0], vec![1.0]));
        let r = relative_offset(&g(&[0.0], &[1.0]), &g(&[1.0], &[1.0])).unwrap();
        assert_eq!((r.mu_rel, r.sigma_rel), (vec![1.0], vec![1.0]));
        let r = relative_offset(&g(&[2.0], &[0.5]), &g(&[3.0], &[1.0])).unwrap();
        assert_eq!((r.mu_rel, r.sigma_rel), (vec![2.0], vec![2.0]));
    }

    #[test]
    fn invalid_std_rejected() {
        assert!(DiagGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(DiagGaussian::new(vec![f64::INFINITY], vec![1.0]).is_err());
    }

    #[test]
    fn log_prob_mean_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = 3;
            let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let std: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            for i in 0..d {
                let h = 1e-5 * std[i];
                let mut up = mean.clone();
                up[i] += h;
                let mut dn = mean.clone();
                dn[i] -= h;
                let fd = (g(&up, &std).log_prob(&a) - g(&dn, &std).log_prob(&a)) / (2.0 * h);
                let analytic = (a[i] - mean[i]) / (std[i] * std[i]);
                let rel = (fd - analytic).abs() / analytic.abs().max(1e-3);
                assert!(rel < 1e-5, "fd {fd} analytic {analytic}");
            }
        }
    }

    #[test]
    fn closed_form_kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let p = g(
                &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                &[rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
            );
            let q = g(
                &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                &[rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
            );
            let n = 1_000_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let (a, _) = p.sample(&mut rng);
                let v = p.log_prob(&a) - q.log_prob(&a);
                s += v;
                s2 += v * v;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            let exact = kl_divergence(&p, &q).unwrap();
            assert!((mean - exact).abs() <= 3.0 * se, "mc {mean} exact {exact} se {se}");
        }
    }

    fn arb_gaussian(d: usize) -> impl Strategy<Value = DiagGaussian> {
        (
            prop::collection::vec(-5.0f64..5.0, d),
            prop::collection::vec(0.05f64..5.0, d),
        )
            .prop_map(|(m, s)| DiagGaussian::new(m, s).unwrap())
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_self(p in arb_gaussian(3), q in arb_gaussian(3)) {
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn relative_offset_round_trips(p in arb_gaussian(4), q in arb_gaussian(4)) {
            let back = relative_offset(&p, &q).unwrap().apply(&p).unwrap();
            for i in 0..4 {
                prop_assert!((back.mean()[i] - q.mean()[i]).abs() <= 1e-12 * (1.0 + q.mean()[i].abs()) * 8.0);
                prop_assert!((back.std()[i] - q.std()[i]).abs() <= 1e-12 * q.std()[i] * 8.0);
            }
        }
    }
}
