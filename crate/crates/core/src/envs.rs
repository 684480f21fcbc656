//! Built-in environments and the on-policy rollout collector.

use rand::{Rng, RngCore};

use crate::advantage::{RolloutBatch, Trajectory};
use crate::error::{Result, TdlError};
use crate::neural::PolicyHeads;

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Env: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Errors if called after `done` without a reset.
    fn step(&mut self, action: &[f64], rng: &mut dyn RngCore) -> Result<Step>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Quadratic,
    PointMass,
}

impl EnvKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "quadratic" => Ok(EnvKind::Quadratic),
            "pointmass" => Ok(EnvKind::PointMass),
            other => Err(TdlError::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Quadratic => "quadratic",
            EnvKind::PointMass => "pointmass",
        }
    }

    pub fn make(self) -> Box<dyn Env> {
        match self {
            EnvKind::Quadratic => Box::new(QuadraticCostEnv::default()),
            EnvKind::PointMass => Box::new(PointMassEnv::default()),
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::Quadratic => 1,
            EnvKind::PointMass => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Quadratic => 1,
            EnvKind::PointMass => 2,
        }
    }
}

/// One-step episodes: `s ~ U[0, 1]`, reward `-a^2` regardless of the state.
#[derive(Clone, Debug, Default)]
pub struct QuadraticCostEnv {
    state: Option<Vec<f64>>,
}

impl Env for QuadraticCostEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = vec![rng.random_range(0.0..1.0)];
        self.state = Some(s.clone());
        s
    }

    fn step(&mut self, action: &[f64], _rng: &mut dyn RngCore) -> Result<Step> {
        let state = self
            .state
            .take()
            .ok_or_else(|| TdlError::EnvMisuse("step after episode end".into()))?;
        if action.len() != 1 {
            return Err(TdlError::DimensionMismatch { expected: 1, got: action.len() });
        }
        Ok(Step {
            next_state: state,
            reward: -action[0] * action[0],
            done: true,
        })
    }
}

/// `E[a^2]` for `a ~ N(mu, sigma^2)`.
pub fn expected_toy_cost(mu: f64, sigma: f64) -> f64 {
    mu * mu + sigma * sigma
}

/// 2-D point mass: state `(px, py, vx, vy)`, action is an acceleration
/// clipped to `[-1, 1]^2`.
#[derive(Clone, Debug)]
pub struct PointMassEnv {
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
    live: bool,
}

impl PointMassEnv {
    pub const DT: f64 = 0.1;
    pub const HORIZON: usize = 64;
    pub const ACTION_COST: f64 = 0.01;

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.t = 0;
        self.live = true;
    }
}

impl Default for PointMassEnv {
    fn default() -> Self {
        PointMassEnv {
            pos: [0.0; 2],
            vel: [0.0; 2],
            t: 0,
            live: false,
        }
    }
}

impl Env for PointMassEnv {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        self.set_state(pos, [0.0; 2]);
        self.observe()
    }

    fn step(&mut self, action: &[f64], _rng: &mut dyn RngCore) -> Result<Step> {
        if !self.live {
            return Err(TdlError::EnvMisuse("step after episode end".into()));
        }
        if action.len() != 2 {
            return Err(TdlError::DimensionMismatch { expected: 2, got: action.len() });
        }
        let acc = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        for i in 0..2 {
            self.pos[i] += Self::DT * self.vel[i];
            self.vel[i] += Self::DT * acc[i];
        }
        self.t += 1;
        let pos_sq = self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1];
        let act_sq = acc[0] * acc[0] + acc[1] * acc[1];
        let done = self.t >= Self::HORIZON;
        self.live = !done;
        Ok(Step {
            next_state: self.observe(),
            reward: -pos_sq - Self::ACTION_COST * act_sq,
            done,
        })
    }
}

/// Runs `policy` for exactly `steps` transitions, starting from a fresh
/// episode. The last episode is marked truncated if the budget cuts it off.
pub fn collect_rollout(
    env: &mut dyn Env,
    policy: &PolicyHeads,
    steps: usize,
    rng: &mut dyn RngCore,
) -> Result<RolloutBatch> {
    if steps == 0 {
        return Err(TdlError::InvalidArgument("rollout needs at least one step".into()));
    }
    let mut trajectories = Vec::new();
    let mut current = empty_trajectory();
    let mut state = env.reset(rng);
    for n in 0..steps {
        let dist = policy.dist(&state)?;
        let (action, noise) = dist.sample(rng);
        let step = env.step(&action, rng)?;
        current.states.push(std::mem::take(&mut state));
        current.actions.push(action);
        current.rewards.push(step.reward);
        current.noises.push(noise);
        current.old_dists.push(dist);
        if step.done {
            current.terminal = true;
            trajectories.push(std::mem::replace(&mut current, empty_trajectory()));
            if n + 1 < steps {
                state = env.reset(rng);
            }
        } else {
            state = step.next_state;
        }
    }
    if !current.is_empty() {
        current.final_state = Some(state);
        trajectories.push(current);
    }
    Ok(RolloutBatch::new(trajectories))
}

/// States visited by `policy` over `count` steps, for held-out measurements.
pub fn sample_states(
    env: &mut dyn Env,
    policy: &PolicyHeads,
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(count);
    let mut state = env.reset(rng);
    while states.len() < count {
        let (action, _) = policy.dist(&state)?.sample(rng);
        let step = env.step(&action, rng)?;
        states.push(std::mem::replace(&mut state, step.next_state));
        if step.done {
            state = env.reset(rng);
        }
    }
    Ok(states)
}

fn empty_trajectory() -> Trajectory {
    Trajectory {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        noises: Vec::new(),
        old_dists: Vec::new(),
        terminal: false,
        final_state: None,
    }
}
