//! `tdl`: training runs, hyperparameter sweeps, numerical verification and
//! the canned studies.

mod repro;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdl_core::config::RunConfig;
use tdl_core::error::TdlError;
use tdl_core::experiment::{parse_grid, run_experiment, sweep, ExperimentResult};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "tdl", version, about = "Target distribution learning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Flat `key = value` config file applied over the defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replace the seed list with this single seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
    /// Independent seeds trained in parallel.
    #[arg(long, value_name = "K", default_value_t = 1)]
    jobs: usize,
    /// Exit with status 2 if any seed diverged.
    #[arg(long)]
    strict: bool,
    /// Config override, applied after `--config`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one config over its seeds.
    Train(RunArgs),
    /// Train every cell of a parameter grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Lines of `key = v1, v2, ...`.
        #[arg(long, value_name = "PATH")]
        grid: PathBuf,
    },
    /// Run the numerical verification suites and write CSV tables.
    Verify {
        #[arg(long, value_name = "DIR", default_value = "verify")]
        out: PathBuf,
        #[arg(long, value_name = "N", default_value_t = 1)]
        seed: u64,
        /// Monte Carlo draws per estimate.
        #[arg(long, value_name = "N", default_value_t = 1_000_000)]
        draws: usize,
    },
    /// Toy-environment instability study.
    ReproFig1(RunArgs),
    /// Holdout KL study on the point mass.
    ReproKl(RunArgs),
    /// Sample-reuse study on the point mass.
    ReproEpochs(RunArgs),
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<TdlError> for CliError {
    fn from(e: TdlError) -> Self {
        match e {
            TdlError::Config { .. } | TdlError::UnknownEnv(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Applies `--config`, then `--set`, then `--seed` on top of `base`.
fn resolve(base: RunConfig, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v).map_err(CliError::Config)?;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn jobs(args: &RunArgs) -> Result<usize, CliError> {
    if args.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    Ok(args.jobs)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn report_run(r: &ExperimentResult) {
    for run in &r.runs {
        let Some(last) = run.reports.last() else { continue };
        let cost = last.mean_action_cost.map_or(String::new(), |c| format!(" cost {c:.3e}"));
        println!(
            "{} seed {}: {} iterations, return {:.4}{cost}{}",
            r.config.name,
            run.seed,
            run.reports.len(),
            last.mean_return,
            if run.diverged() { " DIVERGED" } else { "" }
        );
    }
}

fn train(args: &RunArgs) -> Result<bool, CliError> {
    let cfg = resolve(RunConfig::default(), args)?;
    let r = run_experiment(&cfg, &args.out, jobs(args)?)?;
    report_run(&r);
    println!("wrote {}", args.out.display());
    Ok(r.any_diverged())
}

fn run_sweep(args: &RunArgs, grid_path: &Path) -> Result<bool, CliError> {
    let base = resolve(RunConfig::default(), args)?;
    let text = std::fs::read_to_string(grid_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", grid_path.display())))?;
    let grid = parse_grid(&text)?;
    let cells = sweep(&grid, &base, &args.out, jobs(args)?)?;
    for (i, c) in cells.iter().enumerate() {
        println!(
            "cell {i} [{}]: average score {:.4}, final median return {:.4}",
            c.values.join(", "),
            c.result.average_score(),
            c.result.final_median_return()
        );
    }
    println!("wrote {}", args.out.join("summary.csv").display());
    Ok(cells.iter().any(|c| c.result.any_diverged()))
}

fn dispatch(cli: &Cli) -> Result<(bool, bool), CliError> {
    match &cli.command {
        Command::Train(a) => Ok((train(a)?, a.strict)),
        Command::Sweep { run, grid } => Ok((run_sweep(run, grid)?, run.strict)),
        Command::Verify { out, seed, draws } => {
            if *draws < 2 {
                return Err(CliError::Config("--draws must be at least 2".into()));
            }
            verify::run(out, *seed, *draws)?;
            Ok((false, false))
        }
        Command::ReproFig1(a) => Ok((repro::fig1(a)?, a.strict)),
        Command::ReproKl(a) => Ok((repro::kl(a)?, a.strict)),
        Command::ReproEpochs(a) => Ok((repro::epochs(a)?, a.strict)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok((true, true)) => {
            eprintln!("error: at least one run diverged");
            ExitCode::from(EXIT_DIVERGED)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
