//! Per-iteration metrics, the CSV schema, holdout KL and gradient-norm
//! bookkeeping.

use std::fmt::Write as _;

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::envs::{sample_states, Env};
use crate::error::{Result, TdlError};
use crate::gaussian::kl_divergence;
use crate::neural::PolicyHeads;

/// Bumped whenever the column set or its meaning changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_MARKER: &str = "tdl-metrics-v1";

#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    /// Squared norm of the mean action averaged over a fixed state grid;
    /// only for the quadratic-cost environment.
    pub mean_action_cost: Option<f64>,
    pub sigma_global: Vec<f64>,
    pub max_holdout_kl: f64,
    pub mean_grad_norm: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub nan_flag: bool,
    pub wallclock_ms: u64,
    /// Range of per-dimension `sigma_new(s) / sigma_old(s)` over the holdout.
    pub std_ratio_range: (f64, f64),
    /// Mean-head MSE on the frozen targets after the epoch loop (TDL only).
    pub target_mse: Option<f64>,
}

impl IterationReport {
    pub fn diverged(iteration: usize, env_steps: usize, action_dim: usize, epochs: usize) -> Self {
        IterationReport {
            iteration,
            env_steps,
            mean_return: f64::NAN,
            mean_action_cost: None,
            sigma_global: vec![f64::NAN; action_dim],
            max_holdout_kl: f64::NAN,
            mean_grad_norm: f64::NAN,
            max_grad_norm: f64::NAN,
            epochs,
            nan_flag: true,
            wallclock_ms: 0,
            std_ratio_range: (f64::NAN, f64::NAN),
            target_mse: None,
        }
    }
}

/// One CSV row: a report tagged with its run and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow<'a> {
    pub run_id: &'a str,
    pub seed: u64,
    pub report: &'a IterationReport,
}

pub fn csv_header(action_dim: usize) -> String {
    let mut h = String::from("run_id,seed,iteration,env_steps,mean_return,mean_action_cost");
    for k in 0..action_dim {
        let _ = write!(h, ",sigma_global_{k}");
    }
    h.push_str(",max_holdout_kl,mean_grad_norm,max_grad_norm,epochs,nan_flag,wallclock_ms");
    h
}

fn fmt_f64(v: f64) -> String {
    // Rust's shortest round-trip formatting; NaN and inf spelled out.
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

impl MetricsRow<'_> {
    pub fn to_csv(&self) -> String {
        let r = self.report;
        let mut line = format!(
            "{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            r.iteration,
            r.env_steps,
            fmt_f64(r.mean_return),
            r.mean_action_cost.map(fmt_f64).unwrap_or_default()
        );
        for s in &r.sigma_global {
            let _ = write!(line, ",{}", fmt_f64(*s));
        }
        let _ = write!(
            line,
            ",{},{},{},{},{},{}",
            fmt_f64(r.max_holdout_kl),
            fmt_f64(r.mean_grad_norm),
            fmt_f64(r.max_grad_norm),
            r.epochs,
            u8::from(r.nan_flag),
            r.wallclock_ms
        );
        line
    }
}

pub fn seed_csv(run_id: &str, seed: u64, action_dim: usize, reports: &[IterationReport]) -> String {
    let mut out = csv_header(action_dim);
    out.push('\n');
    for report in reports {
        out.push_str(&MetricsRow { run_id, seed, report }.to_csv());
        out.push('\n');
    }
    out
}

/// States for a max-KL measurement, drawn from separate environment
/// interaction and never trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutSet {
    pub states: Vec<Vec<f64>>,
}

impl HoldoutSet {
    pub fn sample(
        env: &mut dyn Env,
        policy: &PolicyHeads,
        size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(HoldoutSet {
            states: sample_states(env, policy, size, rng)?,
        })
    }

    fn flat(&self) -> Vec<f64> {
        self.states.concat()
    }
}

/// `max_s KL(old(s) || new(s))` over the holdout states.
pub fn max_holdout_kl(holdout: &HoldoutSet, old: &PolicyHeads, new: &PolicyHeads) -> Result<f64> {
    let n = holdout.states.len();
    if n == 0 {
        return Err(TdlError::Empty("holdout"));
    }
    let flat = holdout.flat();
    let a = old.dists(&flat, n)?;
    let b = new.dists(&flat, n)?;
    let mut worst = 0.0f64;
    for (p, q) in a.iter().zip(&b) {
        worst = worst.max(kl_divergence(p, q)?);
    }
    Ok(worst)
}

/// Min and max of `sigma_new / sigma_old` over holdout states and dimensions.
pub fn std_ratio_range(holdout: &HoldoutSet, old: &PolicyHeads, new: &PolicyHeads) -> Result<(f64, f64)> {
    let n = holdout.states.len();
    if n == 0 {
        return Err(TdlError::Empty("holdout"));
    }
    let flat = holdout.flat();
    let a = old.dists(&flat, n)?;
    let b = new.dists(&flat, n)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (p, q) in a.iter().zip(&b) {
        for (s_old, s_new) in p.std().iter().zip(q.std()) {
            let r = s_new / s_old;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

/// Mean and max of per-update gradient L2 norms.
pub fn grad_norm_record(norms: &[f64]) -> Result<(f64, f64)> {
    if norms.is_empty() {
        return Err(TdlError::Empty("gradient norms"));
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((mean, max))
}

/// SHA-256 of every policy parameter, in a fixed order.
pub fn policy_checksum(policy: &PolicyHeads) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in policy.mean_net.params() {
        h.update(v.to_le_bytes());
    }
    if let Some(net) = &policy.logstd_net {
        for v in net.params() {
            h.update(v.to_le_bytes());
        }
    }
    for v in &policy.global_logstd {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

pub fn bytes_checksum(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Linear-interpolation quantile of unsorted data; infinities allowed,
/// NaNs must be filtered out by the caller.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let h = pos - lo as f64;
    if lo == hi || h == 0.0 || v[lo] == v[hi] {
        v[lo]
    } else {
        v[lo] + h * (v[hi] - v[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub const AGGREGATE_QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

/// Per-iteration 10/50/90% quantiles across seeds. A seed that stopped on
/// divergence counts as `+inf` cost and `-inf` return for every later
/// iteration; other metrics use the seeds that still have rows.
pub fn aggregate_csv(runs: &[(u64, Vec<IterationReport>)], action_dim: usize) -> String {
    let iterations = runs.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    let has_cost = runs
        .iter()
        .any(|(_, r)| r.iter().any(|x| x.mean_action_cost.is_some()));
    let mut metrics: Vec<String> = vec!["mean_return".into()];
    if has_cost {
        metrics.push("mean_action_cost".into());
    }
    for k in 0..action_dim {
        metrics.push(format!("sigma_global_{k}"));
    }
    metrics.extend(["max_holdout_kl", "mean_grad_norm", "max_grad_norm"].map(String::from));

    let mut out = String::from("iteration,seeds,diverged");
    for m in &metrics {
        for q in AGGREGATE_QUANTILES {
            let _ = write!(out, ",{m}_q{:02}", (q * 100.0).round() as u32);
        }
    }
    out.push('\n');

    for it in 0..iterations {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); metrics.len()];
        let mut diverged = 0;
        for (_, reports) in runs {
            let row = reports.get(it).filter(|r| !r.nan_flag);
            let Some(r) = row else {
                if reports.last().is_some_and(|r| r.nan_flag) {
                    diverged += 1;
                    cols[0].push(f64::NEG_INFINITY);
                    if has_cost {
                        cols[1].push(f64::INFINITY);
                    }
                }
                continue;
            };
            let mut i = 0;
            let mut push = |v: f64| {
                if !v.is_nan() {
                    cols[i].push(v);
                }
                i += 1;
            };
            push(r.mean_return);
            if has_cost {
                push(r.mean_action_cost.unwrap_or(f64::NAN));
            }
            for k in 0..action_dim {
                push(r.sigma_global.get(k).copied().unwrap_or(f64::NAN));
            }
            push(r.max_holdout_kl);
            push(r.mean_grad_norm);
            push(r.max_grad_norm);
        }
        let _ = write!(out, "{it},{},{diverged}", runs.len());
        for col in &cols {
            for q in AGGREGATE_QUANTILES {
                let _ = write!(out, ",{}", fmt_f64(quantile(col, q)));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Mlp;

    fn const_policy(mean: f64, std: f64) -> PolicyHeads {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        net.set_output_bias(mean);
        PolicyHeads {
            mean_net: net,
            logstd_net: None,
            global_logstd: vec![std.ln()],
            varphi: 0.0,
        }
    }

    fn holdout() -> HoldoutSet {
        HoldoutSet {
            states: (0..8).map(|i| vec![i as f64 / 8.0]).collect(),
        }
    }

    #[test]
    fn identical_policies_have_zero_kl() {
        let p = const_policy(0.3, 0.7);
        assert_eq!(max_holdout_kl(&holdout(), &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn unit_mean_shift_gives_half() {
        let kl = max_holdout_kl(&holdout(), &const_policy(0.0, 1.0), &const_policy(1.0, 1.0)).unwrap();
        assert!((kl - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_holdout_is_an_error() {
        let p = const_policy(0.0, 1.0);
        let empty = HoldoutSet { states: vec![] };
        assert!(max_holdout_kl(&empty, &p, &p).is_err());
    }

    #[test]
    fn grad_norm_examples() {
        assert_eq!(grad_norm_record(&[0.0, 0.0]).unwrap(), (0.0, 0.0));
        let n = crate::neural::l2_norm(&[3.0, 4.0]);
        assert_eq!(grad_norm_record(&[n]).unwrap(), (5.0, 5.0));
        assert!(grad_norm_record(&[]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
    }

    fn report(it: usize, cost: f64, nan: bool) -> IterationReport {
        IterationReport {
            iteration: it,
            env_steps: 10 * (it + 1),
            mean_return: -cost,
            mean_action_cost: Some(cost),
            sigma_global: vec![0.5],
            max_holdout_kl: 0.01,
            mean_grad_norm: 1.0,
            max_grad_norm: 2.0,
            epochs: 3,
            nan_flag: nan,
            wallclock_ms: 0,
            std_ratio_range: (1.0, 1.0),
            target_mse: None,
        }
    }

    #[test]
    fn csv_row_matches_header() {
        let r = report(0, 0.25, false);
        let row = MetricsRow { run_id: "x", seed: 3, report: &r }.to_csv();
        assert_eq!(row.split(',').count(), csv_header(1).split(',').count());
        assert!(row.starts_with("x,3,0,10,-2.5e-1,2.5e-1,5e-1,"));
        let mut p = report(0, 0.25, false);
        p.mean_action_cost = None;
        let row = MetricsRow { run_id: "x", seed: 3, report: &p }.to_csv();
        assert!(row.contains(",-2.5e-1,,5e-1,"));
    }

    #[test]
    fn aggregate_counts_diverged_seeds_as_infinite_cost() {
        let runs = vec![
            (1, vec![report(0, 1.0, false), report(1, 0.5, false)]),
            (2, vec![report(0, 2.0, false), report(1, f64::NAN, true)]),
            (3, vec![report(0, 3.0, false), report(1, 0.1, false)]),
        ];
        let csv = aggregate_csv(&runs, 1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let header: Vec<&str> = lines[0].split(',').collect();
        let col = header.iter().position(|h| *h == "mean_action_cost_q50").unwrap();
        let row0: Vec<&str> = lines[1].split(',').collect();
        let row1: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(row0[col], "2e0");
        assert_eq!(row1[2], "1");
        assert_eq!(row1[col], "5e-1");
        let q90 = header.iter().position(|h| *h == "mean_action_cost_q90").unwrap();
        assert_eq!(row1[q90], "inf");
    }
}
