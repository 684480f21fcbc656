//! Discounted returns and generalized advantage estimation.

use crate::error::{Result, TdlError};
use crate::gaussian::{DiagGaussian, UnitNoise};

/// One contiguous piece of an episode collected under the old policy.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub noises: Vec<UnitNoise>,
    pub old_dists: Vec<DiagGaussian>,
    /// `true` if the episode ended, `false` if cut off by the step budget.
    pub terminal: bool,
    /// State following the last transition; only kept for truncated pieces.
    pub final_state: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rewards.len();
        if n == 0 {
            return Err(TdlError::Empty("trajectory"));
        }
        for len in [
            self.states.len(),
            self.actions.len(),
            self.noises.len(),
            self.old_dists.len(),
        ] {
            if len != n {
                return Err(TdlError::DimensionMismatch { expected: n, got: len });
            }
        }
        if !self.terminal && self.final_state.is_none() {
            return Err(TdlError::InvalidArgument(
                "truncated trajectory without a final state".into(),
            ));
        }
        Ok(())
    }
}

/// `T` transitions split into trajectories, plus per-transition returns and
/// advantages aligned with the flattened transition order.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub total_steps: usize,
}

impl RolloutBatch {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        let total_steps = trajectories.iter().map(Trajectory::len).sum();
        RolloutBatch {
            trajectories,
            returns: Vec::new(),
            advantages: Vec::new(),
            total_steps,
        }
    }

    /// Fills `returns` and `advantages` using a batched critic.
    pub fn estimate<F>(&mut self, critic: F, gamma: f64, lambda: f64) -> Result<()>
    where
        F: Fn(&[Vec<f64>]) -> Vec<f64>,
    {
        let mut returns = Vec::with_capacity(self.total_steps);
        let mut advantages = Vec::with_capacity(self.total_steps);
        for traj in &self.trajectories {
            traj.validate()?;
            let mut values = critic(&traj.states);
            let bootstrap = match (&traj.final_state, traj.terminal) {
                (Some(s), false) => critic(std::slice::from_ref(s))[0],
                _ => 0.0,
            };
            returns.extend(mc_returns(traj, gamma, bootstrap));
            values.push(bootstrap);
            advantages.extend(gae(&traj.rewards, &values, gamma, lambda)?);
        }
        self.returns = returns;
        self.advantages = advantages;
        Ok(())
    }

    pub fn states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.states.iter())
    }

    pub fn actions(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.trajectories.iter().flat_map(|t| t.actions.iter())
    }

    pub fn noises(&self) -> impl Iterator<Item = &UnitNoise> {
        self.trajectories.iter().flat_map(|t| t.noises.iter())
    }

    pub fn old_dists(&self) -> impl Iterator<Item = &DiagGaussian> {
        self.trajectories.iter().flat_map(|t| t.old_dists.iter())
    }

    /// Returns of episodes that finished inside this batch.
    pub fn completed_episode_returns(&self) -> Vec<f64> {
        // A terminal piece may be the tail of an episode begun in an earlier
        // batch; we only see its in-batch rewards, which is what we report.
        self.trajectories
            .iter()
            .filter(|t| t.terminal)
            .map(|t| t.rewards.iter().sum())
            .collect()
    }
}

/// Discounted reward-to-go. For truncated trajectories the tail is
/// bootstrapped with `gamma^(n - t) * bootstrap_value`.
pub fn mc_returns(traj: &Trajectory, gamma: f64, bootstrap_value: f64) -> Vec<f64> {
    let mut acc = if traj.terminal { 0.0 } else { bootstrap_value };
    let mut out = vec![0.0; traj.rewards.len()];
    for (t, r) in traj.rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// GAE by backward recursion. `values` holds one entry per state plus the
/// bootstrap value of the state after the last transition (0 if terminal).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(TdlError::DimensionMismatch {
            expected: rewards.len() + 1,
            got: values.len(),
        });
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(rewards: &[f64], terminal: bool) -> Trajectory {
        let n = rewards.len();
        let dist = DiagGaussian::new(vec![0.0], vec![1.0]).unwrap();
        Trajectory {
            states: vec![vec![0.0]; n],
            actions: vec![vec![0.0]; n],
            rewards: rewards.to_vec(),
            noises: vec![UnitNoise::zeros(1); n],
            old_dists: vec![dist; n],
            terminal,
            final_state: (!terminal).then(|| vec![0.0]),
        }
    }

    #[test]
    fn mc_return_examples() {
        assert_eq!(mc_returns(&traj(&[1.0, 1.0, 1.0], true), 0.0, 0.0), vec![1.0; 3]);
        assert_eq!(
            mc_returns(&traj(&[0.0, 0.0, 1.0], true), 0.5, 0.0),
            vec![0.25, 0.5, 1.0]
        );
        assert_eq!(mc_returns(&traj(&[-3.5], true), 0.9, 0.0), vec![-3.5]);
    }

    #[test]
    fn truncated_tail_bootstraps() {
        let r = mc_returns(&traj(&[1.0, 1.0], false), 0.5, 4.0);
        // t=1: 1 + 0.5*4 = 3, t=0: 1 + 0.5*3 = 2.5
        assert_eq!(r, vec![2.5, 3.0]);
    }

    #[test]
    fn gae_examples() {
        let adv = gae(&[1.0, 1.0], &[0.5, 0.5, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![1.5, 0.5]);

        let rewards = [0.3, -1.0, 2.0];
        let values = [0.1, 0.7, -0.4, 0.9];
        let adv = gae(&rewards, &values, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let delta = rewards[t] + 0.9 * values[t + 1] - values[t];
            assert_eq!(adv[t], delta);
        }
    }

    #[test]
    fn gae_with_unit_lambda_and_zero_critic_is_mc_return() {
        let rewards = [0.2, -0.4, 1.3, 0.8];
        let adv = gae(&rewards, &[0.0; 5], 0.97, 1.0).unwrap();
        assert_eq!(adv, mc_returns(&traj(&rewards, true), 0.97, 0.0));
    }

    #[test]
    fn gae_length_mismatch() {
        assert!(gae(&[1.0, 2.0], &[0.0, 0.0], 0.9, 0.9).is_err());
    }

    #[test]
    fn gae_is_linear_in_rewards_and_values() {
        let rewards = [0.2, -0.4, 1.3];
        let values = [0.5, -0.1, 0.3, 0.0];
        let base = gae(&rewards, &values, 0.99, 0.95).unwrap();
        let c = -2.5;
        let scaled = gae(
            &rewards.map(|r| r * c),
            &values.map(|v| v * c),
            0.99,
            0.95,
        )
        .unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a * c - b).abs() < 1e-12);
        }
    }
}
