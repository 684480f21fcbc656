//! Canned studies: each runs its configs into `out/<name>/` and writes
//! summary CSVs next to them.

use std::fmt::Write as _;

use tdl_core::config::{Algorithm, RunConfig};
use tdl_core::experiment::{run_experiment, ExperimentResult};
use tdl_core::studies::{
    curve_stats, epochs_configs, fig1_configs, final_median_return, fraction_within_kl, kl_bound,
    kl_configs, median_cost_curve, median_kl_exceedances, pointmass_base, quantiles_at, toy_base,
    warmup_iterations, EPOCHS_HIGH, EPOCHS_LOW, FINAL_RETURN_WINDOW,
};

use crate::{create_dir, jobs, resolve, write_file, CliError, RunArgs};

fn run_all(configs: Vec<RunConfig>, args: &RunArgs) -> Result<Vec<ExperimentResult>, CliError> {
    create_dir(&args.out)?;
    let jobs = jobs(args)?;
    let mut out = Vec::with_capacity(configs.len());
    for cfg in configs {
        eprintln!("running {} ({} seeds)", cfg.name, cfg.seeds.len());
        out.push(run_experiment(&cfg, &args.out.join(&cfg.name), jobs)?);
    }
    Ok(out)
}

fn any_diverged(results: &[ExperimentResult]) -> bool {
    results.iter().any(ExperimentResult::any_diverged)
}

fn opt(v: Option<usize>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn fig1(args: &RunArgs) -> Result<bool, CliError> {
    let base = resolve(toy_base(), args)?;
    let results = run_all(fig1_configs(&base), args)?;
    let curves: Vec<Vec<f64>> =
        results.iter().map(|r| median_cost_curve(&r.runs, r.config.iterations)).collect();

    let mut csv = String::from("iteration");
    for r in &results {
        let _ = write!(csv, ",{}", r.config.name);
    }
    csv.push('\n');
    for it in 0..base.iterations {
        let _ = write!(csv, "{it}");
        for c in &curves {
            let _ = write!(csv, ",{:e}", c[it]);
        }
        csv.push('\n');
    }
    write_file(&args.out.join("median_cost.csv"), &csv)?;

    let mut summary = String::from(
        "config,descent_end,reached_target,max_excursion_after_descent,max_excursion_after_target,tail_mean,minimum,converges_stably,oscillates,stable\n",
    );
    for (r, c) in results.iter().zip(&curves) {
        let s = curve_stats(c);
        let _ = writeln!(
            summary,
            "{},{},{},{:e},{:e},{:e},{:e},{},{},{}",
            r.config.name,
            opt(s.descent_end),
            opt(s.reached_target),
            s.max_excursion_after_descent,
            s.max_excursion_after_target,
            s.tail_mean,
            s.minimum,
            s.converges_stably(),
            s.oscillates(),
            s.is_stable()
        );
        println!(
            "{:<16} tail {:.3e}  min {:.3e}  max rise {:.2e}x  stable {}",
            r.config.name,
            s.tail_mean,
            s.minimum,
            s.max_excursion_after_descent,
            s.is_stable()
        );
    }
    write_file(&args.out.join("summary.csv"), &summary)?;
    Ok(any_diverged(&results))
}

pub fn kl(args: &RunArgs) -> Result<bool, CliError> {
    let base = resolve(pointmass_base(), args)?;
    let results = run_all(kl_configs(&base), args)?;
    let bound = kl_bound(&base);
    let warmup = warmup_iterations(base.iterations);

    let mut csv = String::from("iteration");
    for r in &results {
        let n = &r.config.name;
        let _ = write!(csv, ",{n}_q10,{n}_q50,{n}_q90");
    }
    csv.push('\n');
    for it in 0..base.iterations {
        let _ = write!(csv, "{it}");
        for r in &results {
            for q in quantiles_at(&r.runs, it, |x| x.max_holdout_kl) {
                let _ = write!(csv, ",{q:e}");
            }
        }
        csv.push('\n');
    }
    write_file(&args.out.join("max_kl_quantiles.csv"), &csv)?;

    let mut summary = String::from("config,bound,warmup,fraction_within,median_exceedances\n");
    for r in &results {
        let within = fraction_within_kl(&r.runs, bound, warmup);
        let exceed = median_kl_exceedances(&r.runs, bound, warmup);
        let _ = writeln!(summary, "{},{bound:e},{warmup},{within:e},{exceed}", r.config.name);
        println!(
            "{:<10} max KL <= {bound:.3} in {:.1}% of iterations after warmup; median exceedances {exceed}",
            r.config.name,
            100.0 * within
        );
    }
    write_file(&args.out.join("summary.csv"), &summary)?;
    Ok(any_diverged(&results))
}

pub fn epochs(args: &RunArgs) -> Result<bool, CliError> {
    let base = resolve(pointmass_base(), args)?;
    let results = run_all(epochs_configs(&base, EPOCHS_LOW, EPOCHS_HIGH), args)?;
    let ret = |a: Algorithm, e: usize| {
        results
            .iter()
            .find(|r| r.config.algorithm == a && r.config.epochs == e)
            .map_or(f64::NAN, |r| final_median_return(&r.runs, FINAL_RETURN_WINDOW))
    };
    let mut summary = String::from("config,algorithm,epochs,final_median_return\n");
    for r in &results {
        let _ = writeln!(
            summary,
            "{},{},{},{:e}",
            r.config.name,
            r.config.algorithm.name(),
            r.config.epochs,
            ret(r.config.algorithm, r.config.epochs)
        );
    }
    write_file(&args.out.join("summary.csv"), &summary)?;
    for a in [Algorithm::TdlDirect, Algorithm::PpoClip] {
        let (lo, hi) = (ret(a, EPOCHS_LOW), ret(a, EPOCHS_HIGH));
        println!(
            "{:<10} final median return E={EPOCHS_LOW}: {lo:.3}  E={EPOCHS_HIGH}: {hi:.3}  drop {:.3}",
            a.name(),
            lo - hi
        );
    }
    Ok(any_diverged(&results))
}
