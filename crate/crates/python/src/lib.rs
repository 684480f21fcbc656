//! Python module `tdl`: Gaussian policy utilities, target rules, training
//! runs and the numerical verification routines.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdl_core::analysis::{self, FitnessSpec, GradientAscentReport};
use tdl_core::config::{RunConfig, CONFIG_KEYS};
use tdl_core::diagnostics::IterationReport;
use tdl_core::gaussian::{self, DiagGaussian, UnitNoise};
use tdl_core::targets::{self, AdvantageGate};
use tdl_core::TdlError;

fn err(e: TdlError) -> PyErr {
    match e {
        TdlError::Io { .. } => PyOSError::new_err(e.to_string()),
        TdlError::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn gate(name: &str) -> PyResult<AdvantageGate> {
    AdvantageGate::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown gate {name:?}")))
}

fn spec(name: &str, v: f64) -> PyResult<FitnessSpec> {
    match name {
        "quadratic" => Ok(FitnessSpec::quadratic(v)),
        "half-line" | "half_line" => Ok(FitnessSpec::half_line(v)),
        "double-well" | "double_well" => Ok(FitnessSpec::double_well(v)),
        _ => Err(PyValueError::new_err(format!("unknown fitness spec {name:?}"))),
    }
}

/// Diagonal Gaussian with per-dimension mean and standard deviation.
#[pyclass(name = "Gaussian", from_py_object)]
#[derive(Clone)]
struct PyGaussian(DiagGaussian);

#[pymethods]
impl PyGaussian {
    #[new]
    fn new(mean: Vec<f64>, std: Vec<f64>) -> PyResult<Self> {
        DiagGaussian::new(mean, std).map(PyGaussian).map_err(err)
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean().to_vec()
    }

    #[getter]
    fn std(&self) -> Vec<f64> {
        self.0.std().to_vec()
    }

    fn log_prob(&self, action: Vec<f64>) -> PyResult<f64> {
        if action.len() != self.0.dim() {
            return Err(err(TdlError::DimensionMismatch { expected: self.0.dim(), got: action.len() }));
        }
        Ok(self.0.log_prob(&action))
    }

    fn entropy(&self) -> f64 {
        self.0.entropy()
    }

    /// `KL(self || other)`.
    fn kl(&self, other: &PyGaussian) -> PyResult<f64> {
        gaussian::kl_divergence(&self.0, &other.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Gaussian(mean={:?}, std={:?})", self.0.mean(), self.0.std())
    }
}

#[pyfunction]
fn kl_divergence(old: &PyGaussian, new: &PyGaussian) -> PyResult<f64> {
    gaussian::kl_divergence(&old.0, &new.0).map_err(err)
}

#[pyfunction]
#[pyo3(name = "gae")]
fn py_gae(rewards: Vec<f64>, values: Vec<f64>, gamma: f64, lam: f64) -> PyResult<Vec<f64>> {
    tdl_core::advantage::gae(&rewards, &values, gamma, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (old, noise, adv, alpha, gate_name = "sign"))]
fn target_mean_direct(old: &PyGaussian, noise: Vec<f64>, adv: f64, alpha: f64, gate_name: &str) -> PyResult<Vec<f64>> {
    if noise.len() != old.0.dim() {
        return Err(err(TdlError::DimensionMismatch { expected: old.0.dim(), got: noise.len() }));
    }
    Ok(targets::target_mean_direct(&old.0, &UnitNoise(noise), adv, alpha, gate(gate_name)?))
}

#[pyfunction]
#[pyo3(signature = (old, action, adv, nu, gate_name = "indicator"))]
fn target_mean_es(old: &PyGaussian, action: Vec<f64>, adv: f64, nu: f64, gate_name: &str) -> PyResult<Vec<f64>> {
    if action.len() != old.0.dim() {
        return Err(err(TdlError::DimensionMismatch { expected: old.0.dim(), got: action.len() }));
    }
    Ok(targets::target_mean_es(&old.0, &action, adv, nu, gate(gate_name)?))
}

/// Run configuration; keys as in the flat config file format.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        match text {
            Some(t) => RunConfig::parse(t).map(PyConfig).map_err(err),
            None => Ok(PyConfig(RunConfig::default())),
        }
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        CONFIG_KEYS.to_vec()
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).map_err(PyValueError::new_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.0.get(key).ok_or_else(|| PyValueError::new_err(format!("unknown key {key:?}")))
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }
}

fn report_dict<'py>(py: Python<'py>, r: &IterationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("iteration", r.iteration)?;
    d.set_item("env_steps", r.env_steps)?;
    d.set_item("mean_return", r.mean_return)?;
    d.set_item("mean_action_cost", r.mean_action_cost)?;
    d.set_item("sigma_global", r.sigma_global.clone())?;
    d.set_item("max_holdout_kl", r.max_holdout_kl)?;
    d.set_item("mean_grad_norm", r.mean_grad_norm)?;
    d.set_item("max_grad_norm", r.max_grad_norm)?;
    d.set_item("epochs", r.epochs)?;
    d.set_item("nan_flag", r.nan_flag)?;
    d.set_item("std_ratio_range", r.std_ratio_range)?;
    d.set_item("target_mse", r.target_mse)?;
    Ok(d)
}

/// One training run for a single seed, advanced an iteration at a time.
#[pyclass(name = "Trainer", unsendable)]
struct PyTrainer(tdl_core::trainer::Trainer);

#[pymethods]
impl PyTrainer {
    #[new]
    fn new(config: &PyConfig, seed: u64) -> PyResult<Self> {
        tdl_core::trainer::Trainer::new(&config.0, seed).map(PyTrainer).map_err(err)
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.0.has_diverged()
    }

    #[getter]
    fn iteration(&self) -> usize {
        self.0.iteration()
    }

    fn iterate<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.0.iterate().map_err(err)?;
        report_dict(py, &r)
    }

    /// Remaining iterations of the configured budget.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let reports = self.0.run().map_err(err)?;
        reports.iter().map(|r| report_dict(py, r)).collect()
    }
}

/// Trains every seed of `config`; returns `{seed: [row, ...]}`.
#[pyfunction]
#[pyo3(signature = (config, jobs = 1))]
fn run_seeds<'py>(py: Python<'py>, config: &PyConfig, jobs: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.0.clone();
    let runs = py.detach(move || tdl_core::experiment::run_seeds(&cfg, jobs)).map_err(err)?;
    let out = PyDict::new(py);
    for run in runs {
        let rows: PyResult<Vec<_>> = run.reports.iter().map(|r| report_dict(py, r)).collect();
        out.set_item(run.seed, rows?)?;
    }
    Ok(out)
}

/// `(r_mu, r_sigma)` of the fixed-point equations in 1-D, by quadrature.
#[pyfunction]
fn fixed_point_residual(spec_name: &str, v: f64, mu: f64, sigma: f64) -> PyResult<(f64, f64)> {
    let r = analysis::fixed_point_residual(&spec(spec_name, v)?, mu, sigma).map_err(err)?;
    Ok((r.r_mu, r.r_sigma))
}

#[pyfunction]
fn iterate_map(spec_name: &str, v: f64, mu: f64, sigma: f64, steps: usize) -> PyResult<Vec<(f64, f64)>> {
    analysis::iterate_map(&spec(spec_name, v)?, mu, sigma, steps).map_err(err)
}

fn checks_dict<'py>(py: Python<'py>, r: &GradientAscentReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, checks) in [("mean", &r.mean), ("variance", &r.variance)] {
        let rows: Vec<_> = checks
            .iter()
            .map(|c| (c.lhs.value, c.rhs.value, c.residual.value, c.residual.std_error))
            .collect();
        d.set_item(name, rows)?;
    }
    Ok(d)
}

/// Per-dimension `(lhs, rhs, residual, residual_se)` of the expected-target
/// versus gradient-ascent identities, under `"mean"` and `"variance"`.
#[pyfunction]
#[pyo3(signature = (spec_name, v, mu, sigma, nu = 1.0, n = 100_000, fd_step = 1e-2, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn verify_theorem1<'py>(
    py: Python<'py>,
    spec_name: &str,
    v: f64,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    nu: f64,
    n: usize,
    fd_step: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = spec(spec_name, v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = analysis::verify_theorem1(&s, &mu, &sigma, nu, n, fd_step, &mut rng).map_err(err)?;
    checks_dict(py, &r)
}

#[pymodule]
fn tdl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussian>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(py_gae, m)?)?;
    m.add_function(wrap_pyfunction!(target_mean_direct, m)?)?;
    m.add_function(wrap_pyfunction!(target_mean_es, m)?)?;
    m.add_function(wrap_pyfunction!(run_seeds, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point_residual, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_map, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theorem1, m)?)?;
    Ok(())
}

/// Builds the module object without importing a compiled extension.
pub fn make_module(py: Python<'_>) -> PyResult<Bound<'_, PyModule>> {
    let m = PyModule::new(py, "tdl")?;
    tdl(&m)?;
    Ok(m)
}
