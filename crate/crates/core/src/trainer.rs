//! Training loops: TDL (direct, ES, ESr), the PPO-clip baseline, and the
//! CACLA-like ablation that recomputes targets every minibatch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::advantage::RolloutBatch;
use crate::config::{Algorithm, OptimizerChoice, RunConfig};
use crate::diagnostics::{
    bytes_checksum, grad_norm_record, max_holdout_kl, policy_checksum, std_ratio_range,
    HoldoutSet, IterationReport,
};
use crate::envs::{collect_rollout, Env, EnvKind};
use crate::error::{Result, TdlError};
use crate::gaussian::DiagGaussian;
use crate::neural::{layer_sizes, Mlp, Optimizer, OptimizerKind, PolicyHeads};
use crate::targets::{build_targets, TargetBatch};

/// States at which the quadratic-cost environment's mean action is scored.
pub const COST_GRID_POINTS: usize = 64;

/// Mean of `||mu(s)||^2` over an evenly spaced grid of `s` in `[0, 1]`.
pub fn mean_action_cost(policy: &PolicyHeads) -> Result<f64> {
    let n = COST_GRID_POINTS;
    let states: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let cache = policy.mean_net.forward_batch(&states, n)?;
    Ok(cache.output().iter().map(|m| m * m).sum::<f64>() / n as f64)
}

/// Invariant probes captured during one iteration when tracing is on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    /// SHA-256 of the frozen target batch at the start of every epoch.
    pub target_checksums: Vec<[u8; 32]>,
    pub sigma_before: Vec<f64>,
    /// Global std read before every minibatch step.
    pub sigma_during_epochs: Vec<Vec<f64>>,
    pub sigma_after: Vec<f64>,
    pub pre_iteration_checksum: [u8; 32],
    /// Checksum of the policy used as the "old" side of the holdout KL.
    pub kl_reference_checksum: [u8; 32],
}

/// Flattened view of a rollout for minibatch gathering.
struct FlatBatch {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    old_dists: Vec<DiagGaussian>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl FlatBatch {
    fn new(batch: &RolloutBatch, state_dim: usize, action_dim: usize) -> Self {
        FlatBatch {
            state_dim,
            action_dim,
            states: batch.states().flatten().copied().collect(),
            actions: batch.actions().flatten().copied().collect(),
            old_dists: batch.old_dists().cloned().collect(),
            advantages: batch.advantages.clone(),
            returns: batch.returns.clone(),
        }
    }

    fn len(&self) -> usize {
        self.advantages.len()
    }
}

fn gather(src: &[f64], width: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    out
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn negated(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn non_finite(what: &str) -> TdlError {
    TdlError::NonFinite(what.to_string())
}

/// Everything one seed's training run owns.
pub struct Trainer {
    cfg: RunConfig,
    seed: u64,
    pub policy: PolicyHeads,
    pub critic: Mlp,
    mean_opt: Optimizer,
    std_opt: Option<Optimizer>,
    logstd_opt: Optimizer,
    critic_opt: Optimizer,
    env: Box<dyn Env>,
    holdout_env: Box<dyn Env>,
    rng: ChaCha8Rng,
    holdout_rng: ChaCha8Rng,
    iteration: usize,
    env_steps: usize,
    diverged: bool,
    trace: Option<IterationTrace>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut holdout_rng = ChaCha8Rng::seed_from_u64(seed);
        holdout_rng.set_stream(1);
        let (sdim, adim) = (cfg.env.state_dim(), cfg.env.action_dim());
        let varphi = if cfg.algorithm == Algorithm::PpoClip { 0.0 } else { cfg.tdl.varphi };
        let mut policy = PolicyHeads::new(sdim, adim, &cfg.hidden, cfg.sigma0, varphi, &mut rng)?;
        if cfg.init_mean != 0.0 {
            policy.mean_net.set_output_bias(cfg.init_mean);
        }
        let critic = Mlp::new(&layer_sizes(sdim, &cfg.hidden, 1), &mut rng)?;
        let kind = match cfg.optimizer {
            OptimizerChoice::Adam => OptimizerKind::adam(cfg.lr),
            OptimizerChoice::Sgd => OptimizerKind::sgd(cfg.lr),
        };
        Ok(Trainer {
            mean_opt: Optimizer::new(kind, policy.mean_net.params().len()),
            std_opt: policy
                .logstd_net
                .as_ref()
                .map(|n| Optimizer::new(kind, n.params().len())),
            logstd_opt: Optimizer::new(kind, adim),
            critic_opt: Optimizer::new(kind, critic.params().len()),
            policy,
            critic,
            env: cfg.env.make(),
            holdout_env: cfg.env.make(),
            rng,
            holdout_rng,
            iteration: 0,
            env_steps: 0,
            diverged: false,
            trace: None,
            cfg: cfg.clone(),
            seed,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn has_diverged(&self) -> bool {
        self.diverged
    }

    /// Start capturing an [`IterationTrace`] for each subsequent iteration.
    pub fn enable_trace(&mut self) {
        self.trace = Some(IterationTrace::default());
    }

    pub fn last_trace(&self) -> Option<&IterationTrace> {
        self.trace.as_ref()
    }

    fn critic_values(&self, states: &[Vec<f64>]) -> Vec<f64> {
        let n = states.len();
        match self.critic.forward_batch(&states.concat(), n) {
            Ok(cache) => cache.output().to_vec(),
            Err(_) => vec![f64::NAN; n],
        }
    }

    fn epoch_order(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng);
        idx
    }

    fn check_finite(&self) -> Result<()> {
        if !self.policy.is_finite() {
            return Err(non_finite("policy parameters"));
        }
        if !self.critic.is_finite() {
            return Err(non_finite("critic parameters"));
        }
        Ok(())
    }

    fn critic_step(&mut self, states: &[f64], returns: &[f64]) -> Result<()> {
        let (loss, g) = self.critic.backward_mse(states, returns, returns.len())?;
        if !loss.is_finite() {
            return Err(non_finite("critic loss"));
        }
        self.critic_opt.step(self.critic.params_mut(), &g);
        Ok(())
    }

    fn record_sigma(&mut self) {
        let s = self.policy.global_std();
        if let Some(t) = &mut self.trace {
            t.sigma_during_epochs.push(s);
        }
    }

    /// Regression of the mean head (and the state-dependent std head) toward
    /// targets; with `recompute` the mean targets are rebuilt from the
    /// current network output every minibatch.
    fn tdl_epochs(
        &mut self,
        flat: &FlatBatch,
        targets: &TargetBatch,
        recompute: bool,
    ) -> Result<(Vec<f64>, Option<f64>)> {
        let (sd, ad) = (flat.state_dim, flat.action_dim);
        let mu_flat: Vec<f64> = targets.samples.iter().flat_map(|s| s.mu_hat.clone()).collect();
        let sig_flat: Vec<f64> = targets
            .samples
            .iter()
            .flat_map(|s| s.sigma_hat.clone())
            .collect();
        let gate = self.cfg.effective_gate();
        let nu = self.cfg.tdl.nu;
        let mut norms = Vec::new();
        for _ in 0..self.cfg.epochs {
            if let Some(t) = &mut self.trace {
                if !recompute {
                    t.target_checksums.push(bytes_checksum(&targets.to_bytes()));
                }
            }
            let order = self.epoch_order(flat.len());
            for chunk in order.chunks(self.cfg.minibatch) {
                self.record_sigma();
                let m = chunk.len();
                let states = gather(&flat.states, sd, chunk);
                let mu_targets = if recompute {
                    let actions = gather(&flat.actions, ad, chunk);
                    let current = self.policy.mean_net.forward_batch(&states, m)?;
                    let mut out = current.output().to_vec();
                    for (b, &i) in chunk.iter().enumerate() {
                        let g = gate.apply(flat.advantages[i]) * nu;
                        for k in 0..ad {
                            let mu = out[b * ad + k];
                            out[b * ad + k] = mu + g * (actions[b * ad + k] - mu);
                        }
                    }
                    out
                } else {
                    gather(&mu_flat, ad, chunk)
                };
                let (loss, g) = self.policy.mean_net.backward_mse(&states, &mu_targets, m)?;
                if !loss.is_finite() {
                    return Err(non_finite("mean-head loss"));
                }
                self.mean_opt.step(self.policy.mean_net.params_mut(), &g);
                let mut sq = sq_norm(&g);
                let sig_targets = gather(&sig_flat, ad, chunk);
                if let Some((loss, g2)) = self.policy.backward_std_mse(&states, &sig_targets, m)? {
                    if !loss.is_finite() {
                        return Err(non_finite("std-head loss"));
                    }
                    let net = self.policy.logstd_net.as_mut().unwrap();
                    self.std_opt.as_mut().unwrap().step(net.params_mut(), &g2);
                    sq += sq_norm(&g2);
                }
                self.critic_step(&states, &gather(&flat.returns, 1, chunk))?;
                self.check_finite()?;
                norms.push(sq.sqrt());
            }
        }
        let target_mse = if recompute {
            None
        } else {
            let out = self.policy.mean_net.forward_batch(&flat.states, flat.len())?;
            let sse: f64 = out
                .output()
                .iter()
                .zip(&mu_flat)
                .map(|(o, t)| (o - t) * (o - t))
                .sum();
            Some(sse / flat.len() as f64)
        };
        self.policy.global_logstd = targets.sigma_global.iter().map(|s| s.ln()).collect();
        Ok((norms, target_mse))
    }

    fn ppo_epochs(&mut self, flat: &FlatBatch) -> Result<Vec<f64>> {
        let (sd, ad) = (flat.state_dim, flat.action_dim);
        let n = flat.len() as f64;
        let mean = flat.advantages.iter().sum::<f64>() / n;
        let var = flat.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let scale = 1.0 / (var.sqrt() + 1e-8);
        let adv: Vec<f64> = flat.advantages.iter().map(|a| (a - mean) * scale).collect();
        let logp_old: Vec<f64> = flat
            .old_dists
            .iter()
            .zip(flat.actions.chunks_exact(ad))
            .map(|(d, a)| d.log_prob(a))
            .collect();
        let eps = self.cfg.ppo_clip;
        let floor = (self.cfg.min_std > 0.0).then(|| self.cfg.min_std.ln());
        let mut norms = Vec::new();
        for _ in 0..self.cfg.epochs {
            let order = self.epoch_order(flat.len());
            for chunk in order.chunks(self.cfg.minibatch) {
                self.record_sigma();
                let m = chunk.len();
                let states = gather(&flat.states, sd, chunk);
                let actions = gather(&flat.actions, ad, chunk);
                let dists = self.policy.dists(&states, m)?;
                let coeffs: Vec<f64> = chunk
                    .iter()
                    .enumerate()
                    .map(|(b, &i)| {
                        let a = &actions[b * ad..(b + 1) * ad];
                        let ratio = (dists[b].log_prob(a) - logp_old[i]).exp();
                        let unclipped = if adv[i] >= 0.0 { ratio < 1.0 + eps } else { ratio > 1.0 - eps };
                        if unclipped { ratio * adv[i] } else { 0.0 }
                    })
                    .collect();
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(non_finite("surrogate coefficients"));
                }
                let g = self.policy.backward_logprob_with_entropy(
                    &states,
                    &actions,
                    &coeffs,
                    self.cfg.entropy_coef,
                )?;
                self.mean_opt
                    .step(self.policy.mean_net.params_mut(), &negated(&g.mean));
                self.logstd_opt
                    .step(&mut self.policy.global_logstd, &negated(&g.global_logstd));
                if let Some(f) = floor {
                    for l in &mut self.policy.global_logstd {
                        *l = l.max(f);
                    }
                }
                self.critic_step(&states, &gather(&flat.returns, 1, chunk))?;
                self.check_finite()?;
                norms.push(g.norm());
            }
        }
        Ok(norms)
    }

    fn try_iterate(&mut self, started: Instant) -> Result<IterationReport> {
        let cfg = self.cfg.clone();
        let snapshot = self.policy.clone();
        let pre_sum = policy_checksum(&snapshot);
        if let Some(t) = &mut self.trace {
            *t = IterationTrace {
                sigma_before: snapshot.global_std(),
                pre_iteration_checksum: pre_sum,
                ..Default::default()
            };
        }
        let holdout = HoldoutSet::sample(
            self.holdout_env.as_mut(),
            &snapshot,
            cfg.holdout_size,
            &mut self.holdout_rng,
        )?;
        let mut batch = collect_rollout(self.env.as_mut(), &self.policy, cfg.steps, &mut self.rng)?;
        if batch
            .trajectories
            .iter()
            .any(|t| t.rewards.iter().any(|r| !r.is_finite()))
        {
            return Err(non_finite("rewards"));
        }
        batch.estimate(|s| self.critic_values(s), cfg.gamma, cfg.lambda)?;
        if batch.advantages.iter().any(|a| !a.is_finite()) {
            return Err(non_finite("advantages"));
        }
        let flat = FlatBatch::new(&batch, cfg.env.state_dim(), cfg.env.action_dim());

        let (norms, target_mse) = match cfg.algorithm {
            Algorithm::PpoClip => (self.ppo_epochs(&flat)?, None),
            algo => {
                let targets = build_targets(
                    &batch,
                    &cfg.tdl,
                    algo.target_algo().unwrap(),
                    cfg.effective_gate(),
                )?;
                self.tdl_epochs(&flat, &targets, algo == Algorithm::CaclaLike)?
            }
        };
        self.check_finite()?;

        let (mean_grad_norm, max_grad_norm) = grad_norm_record(&norms)?;
        let max_kl = max_holdout_kl(&holdout, &snapshot, &self.policy)?;
        let ratios = std_ratio_range(&holdout, &snapshot, &self.policy)?;
        if let Some(t) = &mut self.trace {
            t.sigma_after = self.policy.global_std();
            t.kl_reference_checksum = policy_checksum(&snapshot);
        }
        let episode_returns = batch.completed_episode_returns();
        let mean_return = if episode_returns.is_empty() {
            batch
                .trajectories
                .iter()
                .map(|t| t.rewards.iter().sum::<f64>())
                .sum::<f64>()
                / batch.trajectories.len() as f64
        } else {
            episode_returns.iter().sum::<f64>() / episode_returns.len() as f64
        };
        let cost = match cfg.env {
            EnvKind::Quadratic => Some(mean_action_cost(&self.policy)?),
            EnvKind::PointMass => None,
        };
        if !mean_return.is_finite() || !max_kl.is_finite() || cost.is_some_and(|c| !c.is_finite()) {
            return Err(non_finite("iteration metrics"));
        }
        Ok(IterationReport {
            iteration: self.iteration,
            env_steps: self.env_steps + cfg.steps,
            mean_return,
            mean_action_cost: cost,
            sigma_global: self.policy.global_std(),
            max_holdout_kl: max_kl,
            mean_grad_norm,
            max_grad_norm,
            epochs: cfg.epochs,
            nan_flag: false,
            wallclock_ms: if cfg.record_wallclock {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
            std_ratio_range: ratios,
            target_mse,
        })
    }

    /// One full iteration. Numeric blow-ups come back as a report with
    /// `nan_flag` set, after which the trainer refuses to continue.
    pub fn iterate(&mut self) -> Result<IterationReport> {
        if self.diverged {
            return Err(TdlError::InvalidArgument("run already diverged".into()));
        }
        let started = Instant::now();
        let report = match self.try_iterate(started) {
            Ok(r) => r,
            Err(TdlError::NonFinite(_) | TdlError::InvalidDistribution(_)) => {
                self.diverged = true;
                let mut r = IterationReport::diverged(
                    self.iteration,
                    self.env_steps + self.cfg.steps,
                    self.cfg.env.action_dim(),
                    self.cfg.epochs,
                );
                if self.cfg.record_wallclock {
                    r.wallclock_ms = started.elapsed().as_millis() as u64;
                }
                r
            }
            Err(e) => return Err(e),
        };
        self.iteration += 1;
        self.env_steps += self.cfg.steps;
        Ok(report)
    }

    /// Runs the configured number of iterations, stopping early on divergence.
    pub fn run(&mut self) -> Result<Vec<IterationReport>> {
        let mut out = Vec::with_capacity(self.cfg.iterations);
        while self.iteration < self.cfg.iterations && !self.diverged {
            out.push(self.iterate()?);
        }
        Ok(out)
    }
}
