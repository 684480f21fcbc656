//! Oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdl_core::neural::{Mlp, PolicyHeads};

pub const FD_H: f64 = 1e-6;

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_H;
            let up = f(&p);
            p[i] = orig - FD_H;
            let dn = f(&p);
            p[i] = orig;
            (up - dn) / (2.0 * FD_H)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the plain distance when both are
/// essentially zero.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}

/// `A_t = sum_{k >= t} (gamma lambda)^(k - t) delta_k` with every delta
/// expanded from scratch.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| {
                    let delta = rewards[k] + gamma * values[k + 1] - values[k];
                    (gamma * lambda).powi((k - t) as i32) * delta
                })
                .sum()
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn mse(net: &Mlp, inputs: &[f64], targets: &[f64], batch: usize) -> f64 {
    let out = net.forward_batch(inputs, batch).unwrap();
    out.output().iter().zip(targets).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / batch as f64
}

/// `(1/M) sum_t c_t log N(a_t | policy(s_t)) + coef * mean entropy`, from
/// densities only.
fn logprob_objective(p: &PolicyHeads, states: &[f64], actions: &[f64], coeffs: &[f64], coef: f64) -> f64 {
    let m = coeffs.len();
    let d = p.action_dim();
    let dists = p.dists(states, m).unwrap();
    let mut total = 0.0;
    for (b, dist) in dists.iter().enumerate() {
        total += coeffs[b] * dist.log_prob(&actions[b * d..(b + 1) * d]) + coef * dist.entropy();
    }
    total / m as f64
}

fn std_mse(p: &PolicyHeads, states: &[f64], targets: &[f64], batch: usize) -> f64 {
    let out = p.logstd_net.as_ref().unwrap().forward_batch(states, batch).unwrap();
    out.output().iter().zip(targets).map(|(z, t)| (z.exp() - t).powi(2)).sum::<f64>() / batch as f64
}

/// Relative errors of every analytic gradient on one random small
/// architecture (at most three layers of at most eight units).
#[derive(Clone, Debug, Default)]
pub struct GradientErrors {
    pub mlp_mse: f64,
    pub policy_mean: f64,
    pub policy_global_logstd: f64,
    pub policy_logstd_net: f64,
    pub std_head_mse: f64,
}

impl GradientErrors {
    pub fn max(&self) -> f64 {
        [self.mlp_mse, self.policy_mean, self.policy_global_logstd, self.policy_logstd_net, self.std_head_mse]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn gradient_errors(seed: u64) -> GradientErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sdim = rng.random_range(1..=4);
    let adim = rng.random_range(1..=3);
    let depth = rng.random_range(0..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
    let batch = rng.random_range(1..=6);
    let varphi = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.2..3.0) };
    let entropy_coef = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.01..1.0) };

    let mut sizes = vec![sdim];
    sizes.extend(&hidden);
    sizes.push(adim);
    let states = random_vec(&mut rng, batch * sdim, 1.0);
    let mut out = GradientErrors::default();

    let net = Mlp::new(&sizes, &mut rng).unwrap();
    let targets = random_vec(&mut rng, batch * adim, 1.0);
    let (_, analytic) = net.backward_mse(&states, &targets, batch).unwrap();
    let numeric = numeric_grad(net.params(), |w| {
        mse(&Mlp::from_params(&sizes, w.to_vec()).unwrap(), &states, &targets, batch)
    });
    out.mlp_mse = rel_error(&analytic, &numeric);

    let sigma0 = rng.random_range(0.2..2.0);
    let mut p = PolicyHeads::new(sdim, adim, &hidden, sigma0, varphi, &mut rng).unwrap();
    p.mean_net = Mlp::new(&sizes, &mut rng).unwrap();
    if p.logstd_net.is_some() {
        p.logstd_net = Some(Mlp::new(&sizes, &mut rng).unwrap());
    }
    let actions = random_vec(&mut rng, batch * adim, 2.0);
    let coeffs = random_vec(&mut rng, batch, 2.0);
    let g = p.backward_logprob_with_entropy(&states, &actions, &coeffs, entropy_coef).unwrap();
    let numeric = numeric_grad(p.mean_net.params(), |w| {
        let mut q = p.clone();
        q.mean_net = Mlp::from_params(&sizes, w.to_vec()).unwrap();
        logprob_objective(&q, &states, &actions, &coeffs, entropy_coef)
    });
    out.policy_mean = rel_error(&g.mean, &numeric);
    let numeric = numeric_grad(&p.global_logstd, |l| {
        let mut q = p.clone();
        q.global_logstd = l.to_vec();
        logprob_objective(&q, &states, &actions, &coeffs, entropy_coef)
    });
    out.policy_global_logstd = rel_error(&g.global_logstd, &numeric);
    match (&p.logstd_net, &g.logstd_net) {
        (Some(net), Some(analytic)) => {
            let numeric = numeric_grad(net.params(), |w| {
                let mut q = p.clone();
                q.logstd_net = Some(Mlp::from_params(&sizes, w.to_vec()).unwrap());
                logprob_objective(&q, &states, &actions, &coeffs, entropy_coef)
            });
            out.policy_logstd_net = rel_error(analytic, &numeric);
        }
        (None, None) => {}
        _ => out.policy_logstd_net = f64::INFINITY,
    }

    let mut p = PolicyHeads::new(sdim, adim, &hidden, sigma0, 1.0, &mut rng).unwrap();
    p.logstd_net = Some(Mlp::new(&sizes, &mut rng).unwrap());
    let targets: Vec<f64> = (0..batch * adim).map(|_| rng.random_range(0.05..2.0)).collect();
    let (_, analytic) = p.backward_std_mse(&states, &targets, batch).unwrap().unwrap();
    let numeric = numeric_grad(p.logstd_net.as_ref().unwrap().params(), |w| {
        let mut q = p.clone();
        q.logstd_net = Some(Mlp::from_params(&sizes, w.to_vec()).unwrap());
        std_mse(&q, &states, &targets, batch)
    });
    out.std_head_mse = rel_error(&analytic, &numeric);
    out
}

/// Ratio of mean-head gradient norms at `sigma = 0.1` and `sigma = 1` for the
/// same states, actions and weights.
pub fn inverse_variance_ratio(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sdim = rng.random_range(1..=3);
    let adim = rng.random_range(1..=3);
    let hidden = vec![rng.random_range(1..=8); rng.random_range(1..=2)];
    let batch = rng.random_range(1..=8);
    let wide = PolicyHeads::new(sdim, adim, &hidden, 1.0, 0.0, &mut rng).unwrap();
    let mut narrow = wide.clone();
    narrow.global_logstd = vec![0.1f64.ln(); adim];
    let states = random_vec(&mut rng, batch * sdim, 1.0);
    let actions = random_vec(&mut rng, batch * adim, 1.0);
    let coeffs = random_vec(&mut rng, batch, 1.0);
    let norm = |p: &PolicyHeads| {
        let g = p.backward_weighted_logprob(&states, &actions, &coeffs).unwrap();
        g.mean.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    norm(&narrow) / norm(&wide)
}
