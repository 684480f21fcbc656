//! Numerical verification suites written as CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdl_core::analysis::{
    fixed_point_residual, iterate_map, sweep_csv, target_sweep, verify_lemma1, verify_theorem1,
    FitnessSpec, GradientAscentReport, TestFunction,
};
use tdl_core::TdlError;

use crate::{create_dir, write_file, CliError};

const SE_K: f64 = 3.0;
const FD_STEP: f64 = 1e-2;
const THEOREM1_POINTS: usize = 20;

fn specs() -> [FitnessSpec; 3] {
    [FitnessSpec::quadratic(-1.0), FitnessSpec::half_line(0.0), FitnessSpec::double_well(-0.5)]
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

const RESIDUAL_HEADER: &str =
    "case,label,mu,sigma,quantity,dim,lhs,lhs_se,rhs,rhs_se,residual,residual_se,z,pass\n";

/// Appends one row per identity; returns `(passed, total)`.
fn residual_rows(
    out: &mut String,
    case: usize,
    label: &str,
    mu: &[f64],
    sigma: &[f64],
    r: &GradientAscentReport,
) -> (usize, usize) {
    let mut passed = 0;
    let mut total = 0;
    for (quantity, checks) in [("mean", &r.mean), ("variance", &r.variance)] {
        for (dim, c) in checks.iter().enumerate() {
            let z = if c.residual.std_error > 0.0 {
                c.residual.value / c.residual.std_error
            } else {
                0.0
            };
            let pass = c.passes(SE_K);
            passed += usize::from(pass);
            total += 1;
            let _ = writeln!(
                out,
                "{case},{label},{},{},{quantity},{dim},{:e},{:e},{:e},{:e},{:e},{:e},{z:.3},{pass}",
                fmt_vec(mu),
                fmt_vec(sigma),
                c.lhs.value,
                c.lhs.std_error,
                c.rhs.value,
                c.rhs.std_error,
                c.residual.value,
                c.residual.std_error
            );
        }
    }
    (passed, total)
}

fn theorem1(dir: &Path, rng: &mut ChaCha8Rng, draws: usize) -> Result<(), CliError> {
    let mut csv = String::from(RESIDUAL_HEADER);
    let (mut passed, mut total) = (0, 0);
    for i in 0..THEOREM1_POINTS {
        let d = 1 + i % 2;
        let spec = match i % 3 {
            0 => FitnessSpec::quadratic(rng.random_range(-3.0..-0.2)),
            1 => FitnessSpec::half_line(rng.random_range(-1.0..1.0)),
            _ => FitnessSpec::double_well(rng.random_range(-1.5..-0.05)),
        };
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let sigma: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..1.5)).collect();
        let nu = rng.random_range(0.5..1.5);
        let r = verify_theorem1(&spec, &mu, &sigma, nu, draws, FD_STEP, rng)?;
        let label = format!("{} V={:.4} nu={nu:.4}", spec.q.name(), spec.v);
        let (p, t) = residual_rows(&mut csv, i, &label, &mu, &sigma, &r);
        passed += p;
        total += t;
    }
    write_file(&dir.join("theorem1_residuals.csv"), &csv)?;
    println!("theorem 1 identities within {SE_K} SE: {passed}/{total}");
    Ok(())
}

fn lemma1(dir: &Path, rng: &mut ChaCha8Rng, draws: usize) -> Result<(), CliError> {
    let mut csv = String::from(RESIDUAL_HEADER);
    let (mut passed, mut total) = (0, 0);
    let cases = [
        ("linear", TestFunction::Linear),
        ("square", TestFunction::Square),
        ("cubic", TestFunction::Cubic),
        ("gaussian", TestFunction::Gaussian),
    ];
    for (i, (label, f)) in cases.into_iter().enumerate() {
        let (mu, sigma) = ([0.4, -0.7], [0.8, 1.3]);
        let r = verify_lemma1(f, &mu, &sigma, draws, FD_STEP, rng)?;
        let (p, t) = residual_rows(&mut csv, i, label, &mu, &sigma, &r);
        passed += p;
        total += t;
    }
    write_file(&dir.join("smoothing_residuals.csv"), &csv)?;
    println!("gaussian smoothing identities within {SE_K} SE: {passed}/{total}");
    Ok(())
}

fn fixed_points(dir: &Path) -> Result<(), CliError> {
    let mut csv = String::from("spec,v,mu,sigma,r_mu,r_sigma\n");
    for spec in specs() {
        for mu in (-6..=6).map(|k| 0.25 * k as f64) {
            for sigma in [0.2, 0.5, 1.0, 2.0] {
                let (rm, rs) = match fixed_point_residual(&spec, mu, sigma) {
                    Ok(r) => (format!("{:e}", r.r_mu), format!("{:e}", r.r_sigma)),
                    Err(TdlError::DegenerateRegion(_)) => (String::new(), String::new()),
                    Err(e) => return Err(e.into()),
                };
                let _ = writeln!(csv, "{},{},{mu},{sigma},{rm},{rs}", spec.q.name(), spec.v);
            }
        }
    }
    write_file(&dir.join("fixed_point_residuals.csv"), &csv)?;

    let path = iterate_map(&FitnessSpec::quadratic(-1.0), 1.5, 0.3, 50)?;
    let mut csv = String::from("step,mu,sigma\n");
    for (k, (m, s)) in path.iter().enumerate() {
        let _ = writeln!(csv, "{k},{m:e},{s:e}");
    }
    write_file(&dir.join("map_iterates.csv"), &csv)?;
    let monotone = path.windows(2).all(|w| w[1].0.abs() < w[0].0.abs());
    println!(
        "fixed-point map on quadratic: |mu| {:.3} -> {:.4} over 50 steps, monotone {monotone}",
        path[0].0,
        path[50].0
    );
    Ok(())
}

fn sweeps(dir: &Path, rng: &mut ChaCha8Rng, draws: usize) -> Result<(), CliError> {
    let mus: Vec<f64> = (-6..=6).map(|k| 0.25 * k as f64).collect();
    let sigmas = [0.3, 0.6, 1.0];
    for spec in specs() {
        let points = target_sweep(&spec, &mus, &sigmas, 1.0, draws, rng)?;
        write_file(&dir.join(format!("target_sweep_{}.csv", spec.q.name())), &sweep_csv(&points))?;
    }
    println!("wrote target sweeps for {} specs", specs().len());
    Ok(())
}

pub fn run(dir: &Path, seed: u64, draws: usize) -> Result<(), CliError> {
    create_dir(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    theorem1(dir, &mut rng, draws)?;
    lemma1(dir, &mut rng, draws)?;
    fixed_points(dir)?;
    sweeps(dir, &mut rng, draws)?;
    println!("wrote {}", dir.display());
    Ok(())
}
