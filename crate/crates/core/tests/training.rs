//! Multi-seed behaviour of the training loops on the toy environment.

use tdl_core::config::Algorithm;
use tdl_core::diagnostics::median;
use tdl_core::experiment::{run_experiment, run_seeds, SeedRun};
use tdl_core::studies::{toy_base, FIG1_ENTROPY_COEF};

fn per_seed_mean(runs: &[SeedRun], f: impl Fn(&tdl_core::diagnostics::IterationReport) -> f64) -> Vec<f64> {
    runs.iter()
        .map(|r| r.reports.iter().map(&f).sum::<f64>() / r.reports.len() as f64)
        .collect()
}

#[test]
fn recomputed_targets_move_further_than_frozen_ones() {
    let mut cfg = toy_base();
    cfg.seeds = (1..=9).collect();
    cfg.epochs = 60;
    cfg.iterations = 5;
    let kl = |algorithm| {
        let mut c = cfg.clone();
        c.algorithm = algorithm;
        let runs = run_seeds(&c, 1).unwrap();
        assert!(runs.iter().all(|r| !r.diverged()));
        median(&per_seed_mean(&runs, |x| x.max_holdout_kl))
    };
    let (cacla, es) = (kl(Algorithm::CaclaLike), kl(Algorithm::TdlEs));
    assert!(cacla > es, "cacla {cacla} vs tdl-es {es}");
}

#[test]
fn entropy_bonus_keeps_sigma_away_from_zero() {
    let mut cfg = toy_base();
    cfg.seeds = (1..=5).collect();
    cfg.iterations = 60;
    cfg.algorithm = Algorithm::PpoClip;
    let final_sigma = |coef| {
        let mut c = cfg.clone();
        c.entropy_coef = coef;
        let runs = run_seeds(&c, 1).unwrap();
        let last: Vec<f64> = runs
            .iter()
            .map(|r| r.reports.last().filter(|x| !x.nan_flag).map_or(0.0, |x| x.sigma_global[0]))
            .collect();
        median(&last)
    };
    let (plain, bonus) = (final_sigma(0.0), final_sigma(FIG1_ENTROPY_COEF));
    assert!(bonus > 2.0 * plain, "entropy {bonus} vs plain {plain}");
}

#[test]
fn single_iteration_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_base();
    cfg.seeds = vec![1];
    cfg.iterations = 1;
    run_experiment(&cfg, dir.path(), 1).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("seed_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 2);
}
