//! Multi-seed runs, run-directory persistence and hyperparameter grids.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{RunConfig, CONFIG_KEYS};
use crate::diagnostics::{aggregate_csv, median, seed_csv, IterationReport, SCHEMA_MARKER};
use crate::error::{Result, TdlError};
use crate::trainer::Trainer;

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<IterationReport>,
}

impl SeedRun {
    pub fn diverged(&self) -> bool {
        self.reports.last().is_some_and(|r| r.nan_flag)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
    pub dir: Option<PathBuf>,
}

impl ExperimentResult {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(SeedRun::diverged)
    }

    /// Mean of `mean_return` over every non-diverged row of every seed.
    pub fn average_score(&self) -> f64 {
        let vals: Vec<f64> = self
            .runs
            .iter()
            .flat_map(|r| r.reports.iter())
            .filter(|r| !r.nan_flag)
            .map(|r| r.mean_return)
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Median over seeds of the last iteration's return; diverged seeds
    /// count as `-inf`.
    pub fn final_median_return(&self) -> f64 {
        let vals: Vec<f64> = self
            .runs
            .iter()
            .map(|r| match r.reports.last() {
                Some(x) if !x.nan_flag => x.mean_return,
                _ => f64::NEG_INFINITY,
            })
            .collect();
        median(&vals)
    }
}

fn run_one(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut trainer = Trainer::new(cfg, seed)?;
    Ok(SeedRun {
        seed,
        reports: trainer.run()?,
    })
}

/// Runs every seed of `cfg` on up to `jobs` threads, in memory.
pub fn run_seeds(cfg: &RunConfig, jobs: usize) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    if jobs <= 1 {
        return cfg.seeds.iter().map(|&s| run_one(cfg, s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| TdlError::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| run_one(cfg, s)).collect())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| TdlError::io(path, e))
}

/// Writes the resolved config, one CSV per seed, the aggregate quantile CSV
/// and the schema marker into `dir`.
pub fn write_run_dir(dir: &Path, cfg: &RunConfig, runs: &[SeedRun]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| TdlError::io(dir, e))?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    write(&dir.join("schema_version"), &format!("{SCHEMA_MARKER}\n"))?;
    let adim = cfg.env.action_dim();
    for run in runs {
        let csv = seed_csv(&cfg.name, run.seed, adim, &run.reports);
        write(&dir.join(format!("seed_{}.csv", run.seed)), &csv)?;
    }
    let pairs: Vec<(u64, Vec<IterationReport>)> =
        runs.iter().map(|r| (r.seed, r.reports.clone())).collect();
    write(&dir.join("aggregate.csv"), &aggregate_csv(&pairs, adim))
}

pub fn run_experiment(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Result<ExperimentResult> {
    let runs = run_seeds(cfg, jobs)?;
    write_run_dir(out_dir, cfg, &runs)?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
        dir: Some(out_dir.to_path_buf()),
    })
}

/// Parameter name to the values to try.
pub type Grid = Vec<(String, Vec<String>)>;

/// Parses `key = v1, v2, ...` lines.
pub fn parse_grid(text: &str) -> Result<Grid> {
    let mut grid = Grid::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TdlError::Config { line: i + 1, msg };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = v1, v2`, got {line:?}")))?;
        let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(err(format!("empty value in {line:?}")));
        }
        grid.push((k.trim().to_string(), values));
    }
    Ok(grid)
}

/// Every combination of grid values applied on top of `base`, in
/// row-major order (last key varies fastest).
pub fn grid_cells(grid: &Grid, base: &RunConfig) -> Result<Vec<(Vec<String>, RunConfig)>> {
    for (key, values) in grid {
        if !CONFIG_KEYS.contains(&key.as_str()) || key == "seeds" || key == "name" {
            return Err(TdlError::Config {
                line: 0,
                msg: format!("invalid sweep key {key:?}"),
            });
        }
        if values.is_empty() {
            return Err(TdlError::Config {
                line: 0,
                msg: format!("no values for sweep key {key:?}"),
            });
        }
    }
    let total: usize = grid.iter().map(|(_, v)| v.len()).product();
    let mut cells = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut picks = vec![String::new(); grid.len()];
        for (slot, (_, values)) in grid.iter().enumerate().rev() {
            picks[slot] = values[rem % values.len()].clone();
            rem /= values.len();
        }
        let mut cfg = base.clone();
        cfg.name = format!("{}_cell{index:03}", base.name);
        for ((key, _), v) in grid.iter().zip(&picks) {
            cfg.set(key, v).map_err(|msg| TdlError::Config { line: 0, msg })?;
        }
        cfg.validate()?;
        cells.push((picks, cfg));
    }
    Ok(cells)
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub values: Vec<String>,
    pub result: ExperimentResult,
}

/// Runs the Cartesian product of `grid` over `base`, one run directory per
/// cell under `out_dir`, plus `summary.csv`.
pub fn sweep(grid: &Grid, base: &RunConfig, out_dir: &Path, jobs: usize) -> Result<Vec<SweepCell>> {
    let cells = grid_cells(grid, base)?;
    let mut out = Vec::with_capacity(cells.len());
    for (i, (values, cfg)) in cells.into_iter().enumerate() {
        let result = run_experiment(&cfg, &out_dir.join(format!("cell_{i:03}")), jobs)?;
        out.push(SweepCell { values, result });
    }
    let mut summary = String::from("cell");
    for (k, _) in grid {
        let _ = write!(summary, ",{k}");
    }
    summary.push_str(",average_score,final_median_return,diverged_seeds\n");
    for (i, cell) in out.iter().enumerate() {
        let _ = write!(summary, "{i}");
        for v in &cell.values {
            let _ = write!(summary, ",{v}");
        }
        let diverged = cell.result.runs.iter().filter(|r| r.diverged()).count();
        let _ = writeln!(
            summary,
            ",{:e},{:e},{diverged}",
            cell.result.average_score(),
            cell.result.final_median_return()
        );
    }
    write(&out_dir.join("summary.csv"), &summary)?;
    Ok(out)
}
