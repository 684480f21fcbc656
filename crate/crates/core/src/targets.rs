//! Per-sample target distributions: target variance, the state-independent
//! aggregate, std blending, and the three target-mean rules.

use crate::advantage::RolloutBatch;
use crate::error::{Result, TdlError};
use crate::gaussian::{DiagGaussian, UnitNoise};

/// Floor applied to the aggregated state-independent target std.
pub const SIGMA_GLOBAL_FLOOR: f64 = 1e-6;

/// How the advantage scales the mean offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvantageGate {
    /// `1{A > 0}`: bad samples leave the mean where it was.
    Indicator,
    /// `sign(A)` with `sign(0) = 0`: bad samples push the mean away.
    Sign,
}

impl AdvantageGate {
    pub fn apply(self, adv: f64) -> f64 {
        match self {
            AdvantageGate::Indicator => {
                if adv > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            AdvantageGate::Sign => {
                if adv > 0.0 {
                    1.0
                } else if adv < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "indicator" | "old" => Some(AdvantageGate::Indicator),
            "sign" | "neg" => Some(AdvantageGate::Sign),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdvantageGate::Indicator => "indicator",
            AdvantageGate::Sign => "sign",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetAlgo {
    Direct,
    Es,
    Esr,
}

impl TargetAlgo {
    pub fn default_gate(self) -> AdvantageGate {
        match self {
            TargetAlgo::Direct => AdvantageGate::Sign,
            TargetAlgo::Es | TargetAlgo::Esr => AdvantageGate::Indicator,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdlHyper {
    /// Trust-region size for the direct rule; offsets are clipped to `sqrt(2 alpha)`.
    pub alpha: f64,
    /// Step size of the ES mean rule, in `(0, 1]`.
    pub nu: f64,
    /// Revising ratio, in `[0, 1]`.
    pub revise_ratio: f64,
    /// Half-width of the revision window.
    pub window: usize,
    /// Blending exponent between state-independent and state-dependent std.
    pub varphi: f64,
}

impl Default for TdlHyper {
    fn default() -> Self {
        TdlHyper {
            alpha: 0.025,
            nu: 1.0,
            revise_ratio: 0.1,
            window: 2,
            varphi: 1.0,
        }
    }
}

impl TdlHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TdlError::InvalidArgument(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad("nu must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.revise_ratio) {
            return bad("revise_ratio must lie in [0, 1]");
        }
        if !(self.varphi >= 0.0 && self.varphi.is_finite()) {
            return bad("varphi must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSample {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetBatch {
    pub samples: Vec<TargetSample>,
    /// Root-mean-square of the per-sample target stds, floored.
    pub sigma_global: Vec<f64>,
}

impl TargetBatch {
    /// Little-endian byte image of every target value, for freeze checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in &self.samples {
            for v in s.mu_hat.iter().chain(&s.sigma_hat) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.sigma_global {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Per-sample target std: `|a - mu_old|` when the advantage is positive,
/// the old std otherwise.
pub fn target_variance(action: &[f64], old: &DiagGaussian, adv: f64) -> Vec<f64> {
    if adv > 0.0 {
        action
            .iter()
            .zip(old.mean())
            .map(|(a, m)| (a - m).abs())
            .collect()
    } else {
        old.std().to_vec()
    }
}

/// Elementwise root-mean-square of the per-sample target stds.
pub fn state_independent_target(sigma_hats: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = sigma_hats.first().ok_or(TdlError::Empty("sigma_hats"))?;
    let d = first.len();
    let mut acc = vec![0.0; d];
    for s in sigma_hats {
        if s.len() != d {
            return Err(TdlError::DimensionMismatch { expected: d, got: s.len() });
        }
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v * v;
        }
    }
    let n = sigma_hats.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n).sqrt()).collect())
}

/// `sigma_global^(1/(varphi+1)) * sigma_state^(varphi/(varphi+1))`.
pub fn compose_std(sigma_global: &[f64], sigma_state: &[f64], varphi: f64) -> Result<Vec<f64>> {
    if sigma_global.len() != sigma_state.len() {
        return Err(TdlError::DimensionMismatch {
            expected: sigma_global.len(),
            got: sigma_state.len(),
        });
    }
    if !(varphi >= 0.0) {
        return Err(TdlError::InvalidArgument("varphi must be non-negative".into()));
    }
    if sigma_global
        .iter()
        .chain(sigma_state)
        .any(|s| !(*s > 0.0 && s.is_finite()))
    {
        return Err(TdlError::InvalidArgument(
            "std components must be finite and positive".into(),
        ));
    }
    if varphi == 0.0 {
        return Ok(sigma_global.to_vec());
    }
    let w = 1.0 / (varphi + 1.0);
    Ok(sigma_global
        .iter()
        .zip(sigma_state)
        .map(|(g, s)| (w * g.ln() + (1.0 - w) * s.ln()).exp())
        .collect())
}

/// Direct rule: move toward (or away from) the sample, with the offset in
/// old-std units clipped to norm `sqrt(2 alpha)`.
pub fn target_mean_direct(
    old: &DiagGaussian,
    noise: &UnitNoise,
    adv: f64,
    alpha: f64,
    gate: AdvantageGate,
) -> Vec<f64> {
    let norm = noise.norm();
    let radius = (2.0 * alpha).sqrt();
    let scale = if norm > radius { radius / norm } else { 1.0 };
    let g = gate.apply(adv) * scale;
    old.mean()
        .iter()
        .zip(old.std())
        .zip(noise.as_slice())
        .map(|((m, s), y)| m + g * y * s)
        .collect()
}

/// ES rule: `mu_old + g(A) * nu * (a - mu_old)`.
pub fn target_mean_es(
    old: &DiagGaussian,
    action: &[f64],
    adv: f64,
    nu: f64,
    gate: AdvantageGate,
) -> Vec<f64> {
    let g = gate.apply(adv) * nu;
    old.mean()
        .iter()
        .zip(action)
        .map(|(m, a)| m + g * (a - m))
        .collect()
}

/// Tilts a sample's noise toward the advantage-weighted average noise of its
/// neighbours: `(1 - r) y_c + r * sum(y_k max(0, A_k)) / sum(max(0, A_k))`.
///
/// Falls back to the unrevised noise when no neighbour has positive advantage.
pub fn revise_noise(window: &[(&UnitNoise, f64)], center: usize, r: f64) -> UnitNoise {
    let y_c = window[center].0;
    let total: f64 = window.iter().map(|(_, a)| a.max(0.0)).sum();
    if total <= 0.0 || r == 0.0 {
        return y_c.clone();
    }
    let mut avg = vec![0.0; y_c.dim()];
    for (y, a) in window {
        let w = a.max(0.0) / total;
        if w > 0.0 {
            for (acc, v) in avg.iter_mut().zip(y.as_slice()) {
                *acc += w * v;
            }
        }
    }
    UnitNoise(
        y_c.as_slice()
            .iter()
            .zip(&avg)
            .map(|(y, p)| (1.0 - r) * y + r * p)
            .collect(),
    )
}

/// Targets for every transition in the batch. Revision windows stay within
/// one trajectory and are truncated at its ends.
pub fn build_targets(
    batch: &RolloutBatch,
    hyper: &TdlHyper,
    algo: TargetAlgo,
    gate: AdvantageGate,
) -> Result<TargetBatch> {
    if batch.advantages.len() != batch.total_steps {
        return Err(TdlError::InvalidArgument(
            "advantages must be estimated before building targets".into(),
        ));
    }
    let mut samples = Vec::with_capacity(batch.total_steps);
    let mut offset = 0;
    for traj in &batch.trajectories {
        let advs = &batch.advantages[offset..offset + traj.len()];
        for t in 0..traj.len() {
            let old = &traj.old_dists[t];
            let adv = advs[t];
            let action = &traj.actions[t];
            let sigma_hat = target_variance(action, old, adv);
            let mu_hat = match algo {
                TargetAlgo::Direct => {
                    target_mean_direct(old, &traj.noises[t], adv, hyper.alpha, gate)
                }
                TargetAlgo::Es => target_mean_es(old, action, adv, hyper.nu, gate),
                TargetAlgo::Esr => {
                    let lo = t.saturating_sub(hyper.window);
                    let hi = (t + hyper.window + 1).min(traj.len());
                    let window: Vec<(&UnitNoise, f64)> =
                        (lo..hi).map(|k| (&traj.noises[k], advs[k])).collect();
                    let revised = revise_noise(&window, t - lo, hyper.revise_ratio);
                    let revised_action = old.action_for(&revised);
                    target_mean_es(old, &revised_action, adv, hyper.nu, gate)
                }
            };
            samples.push(TargetSample { mu_hat, sigma_hat });
        }
        offset += traj.len();
    }
    let sigma_hats: Vec<Vec<f64>> = samples.iter().map(|s| s.sigma_hat.clone()).collect();
    let sigma_global = state_independent_target(&sigma_hats)?
        .into_iter()
        .map(|s| s.max(SIGMA_GLOBAL_FLOOR))
        .collect();
    Ok(TargetBatch {
        samples,
        sigma_global,
    })
}
