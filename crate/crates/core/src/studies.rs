//! Canned desk-scale studies and the curve statistics used to judge them.

use crate::config::{Algorithm, OptimizerChoice, RunConfig};
use crate::diagnostics::{median, quantile};
use crate::envs::EnvKind;
use crate::experiment::SeedRun;
use crate::targets::TdlHyper;

/// A curve's initial descent ends once it falls to this fraction of its
/// first value.
pub const DESCENT_FRACTION: f64 = 0.1;
/// Rise over the running minimum that counts as an oscillation.
pub const EXCURSION_FACTOR: f64 = 10.0;
/// Cost the TDL variants must get below.
pub const TOY_COST_TARGET: f64 = 1e-2;
/// Fraction of final iterations averaged for asymptotic values.
pub const TAIL_FRACTION: f64 = 0.1;

/// Entropy coefficient for the entropy remedy: lowest average median cost
/// over a 100-seed grid from 0.01 to 1.4.
pub const FIG1_ENTROPY_COEF: f64 = 1.1;
pub const FIG1_MIN_STD: f64 = 0.05;
pub const FIG1_SMALL_CLIP: f64 = 0.05;

/// Quadratic-cost setup shared by every algorithm in the instability study.
pub fn toy_base() -> RunConfig {
    RunConfig {
        name: "toy".into(),
        env: EnvKind::Quadratic,
        algorithm: Algorithm::TdlDirect,
        seeds: (1..=100).collect(),
        steps: 512,
        minibatch: 64,
        epochs: 10,
        lr: 0.01,
        optimizer: OptimizerChoice::Sgd,
        hidden: vec![10],
        sigma0: 1.0,
        init_mean: 1.0,
        tdl: TdlHyper {
            varphi: 0.0,
            ..TdlHyper::default()
        },
        iterations: 300,
        holdout_size: 64,
        ..RunConfig::default()
    }
}

/// TDL-direct, TDL-ES, plain PPO and PPO with each remedy.
pub fn fig1_configs(base: &RunConfig) -> Vec<RunConfig> {
    let with = |name: &str, algorithm: Algorithm, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        c.name = name.into();
        c.algorithm = algorithm;
        f(&mut c);
        c
    };
    vec![
        with("tdl-direct", Algorithm::TdlDirect, &|_| {}),
        with("tdl-es", Algorithm::TdlEs, &|_| {}),
        with("ppo", Algorithm::PpoClip, &|_| {}),
        with("ppo-entropy", Algorithm::PpoClip, &|c| c.entropy_coef = FIG1_ENTROPY_COEF),
        with("ppo-min-std", Algorithm::PpoClip, &|c| c.min_std = FIG1_MIN_STD),
        with("ppo-small-clip", Algorithm::PpoClip, &|c| c.ppo_clip = FIG1_SMALL_CLIP),
    ]
}

/// Point-mass setup for the sample-reuse and KL studies.
pub fn pointmass_base() -> RunConfig {
    RunConfig {
        name: "pointmass".into(),
        env: EnvKind::PointMass,
        algorithm: Algorithm::TdlDirect,
        seeds: (1..=5).collect(),
        steps: 1024,
        minibatch: 128,
        epochs: 60,
        lr: 1e-3,
        optimizer: OptimizerChoice::Adam,
        hidden: vec![32, 32],
        sigma0: 0.3,
        tdl: TdlHyper {
            varphi: 0.0,
            ..TdlHyper::default()
        },
        iterations: 80,
        holdout_size: 256,
        ..RunConfig::default()
    }
}

/// Epoch counts compared in the sample-reuse study.
pub const EPOCHS_LOW: usize = 15;
pub const EPOCHS_HIGH: usize = 60;
/// Final iterations averaged per seed for the final return.
pub const FINAL_RETURN_WINDOW: usize = 5;

/// `(algorithm, epochs)` cells of the sample-reuse study at a fixed number
/// of iterations, hence fixed environment steps.
pub fn epochs_configs(base: &RunConfig, low: usize, high: usize) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for algorithm in [Algorithm::TdlDirect, Algorithm::PpoClip] {
        for epochs in [low, high] {
            let mut c = base.clone();
            c.algorithm = algorithm;
            c.epochs = epochs;
            c.name = format!("{}-e{epochs}", algorithm.name());
            out.push(c);
        }
    }
    out
}

/// TDL-direct against PPO with its default clip on the point mass.
pub fn kl_configs(base: &RunConfig) -> Vec<RunConfig> {
    [Algorithm::TdlDirect, Algorithm::PpoClip]
        .into_iter()
        .map(|a| {
            let mut c = base.clone();
            c.algorithm = a;
            c.name = a.name().into();
            c
        })
        .collect()
}

/// Per-iteration median over seeds of the mean-action cost; a seed that
/// diverged counts as infinite cost from then on.
pub fn median_cost_curve(runs: &[SeedRun], iterations: usize) -> Vec<f64> {
    (0..iterations)
        .map(|it| {
            let vals: Vec<f64> = runs
                .iter()
                .map(|r| match r.reports.get(it) {
                    Some(x) if !x.nan_flag => x.mean_action_cost.unwrap_or(f64::NAN),
                    _ => f64::INFINITY,
                })
                .collect();
            median(&vals)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveStats {
    /// First iteration at or below `DESCENT_FRACTION` of the first value.
    pub descent_end: Option<usize>,
    /// First iteration below [`TOY_COST_TARGET`].
    pub reached_target: Option<usize>,
    /// Largest `curve[t] / running_min[t]` after the descent.
    pub max_excursion_after_descent: f64,
    /// Largest `curve[t] / running_min[t]` after reaching the target.
    pub max_excursion_after_target: f64,
    /// Mean of the curve over the last [`TAIL_FRACTION`] of iterations.
    pub tail_mean: f64,
    pub minimum: f64,
}

fn max_ratio_from(curve: &[f64], running: &[f64], start: Option<usize>) -> f64 {
    match start {
        None => f64::NAN,
        Some(s) => curve[s..]
            .iter()
            .zip(&running[s..])
            .map(|(c, m)| if *m > 0.0 { c / m } else if *c > 0.0 { f64::INFINITY } else { 1.0 })
            .fold(1.0, f64::max),
    }
}

pub fn curve_stats(curve: &[f64]) -> CurveStats {
    let mut running = Vec::with_capacity(curve.len());
    let mut m = f64::INFINITY;
    for &c in curve {
        m = m.min(c);
        running.push(m);
    }
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let descent_end = curve.iter().position(|&c| c <= DESCENT_FRACTION * first);
    let reached_target = curve.iter().position(|&c| c < TOY_COST_TARGET);
    let tail = ((curve.len() as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, curve.len().max(1));
    let tail_vals = &curve[curve.len().saturating_sub(tail)..];
    CurveStats {
        descent_end,
        reached_target,
        max_excursion_after_descent: max_ratio_from(curve, &running, descent_end),
        max_excursion_after_target: max_ratio_from(curve, &running, reached_target),
        tail_mean: tail_vals.iter().sum::<f64>() / tail_vals.len() as f64,
        minimum: m,
    }
}

impl CurveStats {
    /// Reaches the cost target and never rises [`EXCURSION_FACTOR`] above
    /// its running minimum afterwards.
    pub fn converges_stably(&self) -> bool {
        self.reached_target.is_some() && self.max_excursion_after_target <= EXCURSION_FACTOR
    }

    /// Rises [`EXCURSION_FACTOR`] above its running minimum after the
    /// initial descent.
    pub fn oscillates(&self) -> bool {
        self.descent_end.is_some() && self.max_excursion_after_descent > EXCURSION_FACTOR
    }

    /// Descends and never oscillates afterwards.
    pub fn is_stable(&self) -> bool {
        self.descent_end.is_some() && !self.oscillates()
    }
}

/// Median over seeds of the mean return over each seed's last `k`
/// iterations; diverged seeds count as `-inf`.
pub fn final_median_return(runs: &[SeedRun], k: usize) -> f64 {
    let vals: Vec<f64> = runs
        .iter()
        .map(|r| {
            if r.diverged() || r.reports.is_empty() {
                return f64::NEG_INFINITY;
            }
            let k = k.min(r.reports.len());
            let tail = &r.reports[r.reports.len() - k..];
            tail.iter().map(|x| x.mean_return).sum::<f64>() / k as f64
        })
        .collect();
    median(&vals)
}

/// Holdout KL level, per action dimension and unit of alpha, that TDL-direct
/// must respect.
pub const KL_BOUND_FACTOR: f64 = 1.2;

pub fn kl_bound(cfg: &RunConfig) -> f64 {
    KL_BOUND_FACTOR * cfg.env.action_dim() as f64 * cfg.tdl.alpha
}

/// Iterations excluded from KL statistics at the start of a run.
pub const KL_WARMUP_FRACTION: f64 = 0.1;

pub fn warmup_iterations(iterations: usize) -> usize {
    (iterations as f64 * KL_WARMUP_FRACTION).ceil() as usize
}

/// Fraction of post-warmup iterations, pooled over seeds, whose max holdout
/// KL is at most `bound`. Diverged rows count as violations.
pub fn fraction_within_kl(runs: &[SeedRun], bound: f64, warmup: usize) -> f64 {
    let mut total = 0usize;
    let mut ok = 0usize;
    for r in runs {
        for x in r.reports.iter().skip(warmup) {
            total += 1;
            if !x.nan_flag && x.max_holdout_kl <= bound {
                ok += 1;
            }
        }
    }
    if total == 0 { f64::NAN } else { ok as f64 / total as f64 }
}

/// Median over seeds of the number of post-warmup iterations whose max
/// holdout KL exceeds `bound`.
pub fn median_kl_exceedances(runs: &[SeedRun], bound: f64, warmup: usize) -> f64 {
    let counts: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.reports
                .iter()
                .skip(warmup)
                .filter(|x| x.nan_flag || x.max_holdout_kl > bound)
                .count() as f64
        })
        .collect();
    median(&counts)
}

/// 10/50/90% quantiles of a metric over seeds at one iteration.
pub fn quantiles_at(runs: &[SeedRun], it: usize, f: impl Fn(&crate::diagnostics::IterationReport) -> f64) -> [f64; 3] {
    let vals: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.reports.get(it).filter(|x| !x.nan_flag).map(&f))
        .collect();
    [quantile(&vals, 0.1), quantile(&vals, 0.5), quantile(&vals, 0.9)]
}
