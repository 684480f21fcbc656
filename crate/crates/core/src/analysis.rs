//! Numerical checks of the target rules' theory on a fixed fitness
//! `F(a) = 1{Q(a) > V}`: the smoothed objective `G(mu, sigma) = E[F(mu + y sigma)]`,
//! the expected ES targets, their gradient-ascent reading, and the truncated
//! Gaussian map in one dimension.
//!
//! Monte Carlo estimators subtract the sample mean of the integrand's
//! fitness factor (a baseline); this leaves the expectation unchanged and
//! makes the degenerate regions (`D` empty or everything) exact.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Result, TdlError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QFunction {
    /// `Q(a) = a_0`
    Linear,
    /// `Q(a) = -||a||^2`
    NegQuadratic,
    /// `Q(a) = -(||a||^2 - 1)^2`
    DoubleWell,
    Constant(f64),
}

impl QFunction {
    pub fn eval(self, a: &[f64]) -> f64 {
        match self {
            QFunction::Linear => a[0],
            QFunction::NegQuadratic => -a.iter().map(|x| x * x).sum::<f64>(),
            QFunction::DoubleWell => {
                let r = a.iter().map(|x| x * x).sum::<f64>() - 1.0;
                -r * r
            }
            QFunction::Constant(c) => c,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QFunction::Linear => "half-line",
            QFunction::NegQuadratic => "quadratic",
            QFunction::DoubleWell => "double-well",
            QFunction::Constant(_) => "constant",
        }
    }
}

/// Fixed action-value `Q` and state value `V`; `D = {a : Q(a) > V}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessSpec {
    pub q: QFunction,
    pub v: f64,
}

impl FitnessSpec {
    pub fn half_line(v: f64) -> Self {
        FitnessSpec { q: QFunction::Linear, v }
    }

    pub fn quadratic(v: f64) -> Self {
        FitnessSpec { q: QFunction::NegQuadratic, v }
    }

    pub fn double_well(v: f64) -> Self {
        FitnessSpec { q: QFunction::DoubleWell, v }
    }

    pub fn constant(c: f64, v: f64) -> Self {
        FitnessSpec { q: QFunction::Constant(c), v }
    }

    pub fn fitness(&self, a: &[f64]) -> bool {
        self.q.eval(a) - self.v > 0.0
    }
}

/// A Monte Carlo mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0 }
    }

    /// `|value - target| <= k * std_error`; with zero error the match must be
    /// exact.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Streaming mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn estimate(&self) -> Estimate {
        if self.n < 2 {
            return Estimate::exact(self.mean);
        }
        let var = self.m2 / (self.n - 1) as f64;
        Estimate {
            value: self.mean,
            std_error: (var / self.n as f64).sqrt(),
        }
    }
}

/// Standard normal draws shared across evaluations (common random numbers).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraws {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl NoiseDraws {
    pub fn draw(dim: usize, n: usize, rng: &mut dyn RngCore) -> Self {
        NoiseDraws {
            dim,
            data: (0..dim * n).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}

fn check_args(mu: &[f64], sigma: &[f64], n: usize) -> Result<()> {
    if mu.len() != sigma.len() {
        return Err(TdlError::DimensionMismatch { expected: mu.len(), got: sigma.len() });
    }
    if mu.is_empty() {
        return Err(TdlError::Empty("mean vector"));
    }
    if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(TdlError::InvalidDistribution("sigma must be positive".into()));
    }
    if n == 0 {
        return Err(TdlError::InvalidArgument("need at least one sample".into()));
    }
    Ok(())
}

fn fitness_at(spec: &FitnessSpec, mu: &[f64], sigma: &[f64], y: &[f64], buf: &mut Vec<f64>) -> bool {
    buf.clear();
    buf.extend(mu.iter().zip(sigma).zip(y).map(|((m, s), y)| m + y * s));
    spec.fitness(buf)
}

/// `G` estimated on the given draws.
pub fn eval_g_with(spec: &FitnessSpec, mu: &[f64], sigma: &[f64], draws: &NoiseDraws) -> Estimate {
    let mut m = Moments::default();
    let mut buf = Vec::with_capacity(mu.len());
    for y in draws.iter() {
        m.push(f64::from(u8::from(fitness_at(spec, mu, sigma, y, &mut buf))));
    }
    m.estimate()
}

/// Monte Carlo estimate of `G(mu, sigma) = P(Q(mu + y sigma) > V)`.
pub fn eval_g(
    spec: &FitnessSpec,
    mu: &[f64],
    sigma: &[f64],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Estimate> {
    check_args(mu, sigma, n)?;
    let draws = NoiseDraws::draw(mu.len(), n, rng);
    Ok(eval_g_with(spec, mu, sigma, &draws))
}

/// Expected ES targets under the indicator gate, per dimension:
/// `mu' = mu + nu sigma E[y F]` and `sigma'^2 = sigma^2 + sigma^2 E[(y^2 - 1) F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedTarget {
    pub mu_prime: Vec<Estimate>,
    pub sigma_sq_prime: Vec<Estimate>,
}

pub fn expected_target_with(
    spec: &FitnessSpec,
    mu: &[f64],
    sigma: &[f64],
    nu: f64,
    draws: &NoiseDraws,
) -> ExpectedTarget {
    let d = mu.len();
    let mut buf = Vec::with_capacity(d);
    let f: Vec<f64> = draws
        .iter()
        .map(|y| f64::from(u8::from(fitness_at(spec, mu, sigma, y, &mut buf))))
        .collect();
    let g_bar = f.iter().sum::<f64>() / f.len() as f64;
    let mut mean_m = vec![Moments::default(); d];
    let mut var_m = vec![Moments::default(); d];
    for (y, fk) in draws.iter().zip(&f) {
        let c = fk - g_bar;
        for i in 0..d {
            mean_m[i].push(y[i] * c);
            var_m[i].push((y[i] * y[i] - 1.0) * c);
        }
    }
    let scale = |e: Estimate, a: f64, b: f64| Estimate {
        value: a + b * e.value,
        std_error: b.abs() * e.std_error,
    };
    ExpectedTarget {
        mu_prime: (0..d)
            .map(|i| scale(mean_m[i].estimate(), mu[i], nu * sigma[i]))
            .collect(),
        sigma_sq_prime: (0..d)
            .map(|i| {
                let s2 = sigma[i] * sigma[i];
                scale(var_m[i].estimate(), s2, s2)
            })
            .collect(),
    }
}

pub fn expected_target(
    spec: &FitnessSpec,
    mu: &[f64],
    sigma: &[f64],
    nu: f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<ExpectedTarget> {
    check_args(mu, sigma, n)?;
    let draws = NoiseDraws::draw(mu.len(), n, rng);
    Ok(expected_target_with(spec, mu, sigma, nu, &draws))
}

/// Both sides of an identity and the paired per-sample residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: Estimate,
}

impl IdentityCheck {
    pub fn passes(&self, k: f64) -> bool {
        self.residual.within(0.0, k)
    }

    fn from_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut l, mut r, mut d) = (Moments::default(), Moments::default(), Moments::default());
        for (a, b) in pairs {
            l.push(a);
            r.push(b);
            d.push(a - b);
        }
        IdentityCheck {
            lhs: l.estimate(),
            rhs: r.estimate(),
            residual: d.estimate(),
        }
    }
}

/// Per-dimension checks of `mu' - mu = nu sigma^2 dG/dmu` and
/// `sigma'^2 - sigma^2 = 2 sigma^4 dG/d(sigma^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAscentReport {
    pub mean: Vec<IdentityCheck>,
    pub variance: Vec<IdentityCheck>,
}

impl GradientAscentReport {
    pub fn passes(&self, k: f64) -> bool {
        self.mean.iter().chain(&self.variance).all(|c| c.passes(k))
    }
}

/// Compares the expected-target offsets with central finite differences of
/// `G`. Steps are `fd_step * sigma_i` for the mean and `fd_step * sigma_i^2`
/// for the variance; every stencil point reuses the same draws.
pub fn verify_theorem1(
    spec: &FitnessSpec,
    mu: &[f64],
    sigma: &[f64],
    nu: f64,
    n: usize,
    fd_step: f64,
    rng: &mut dyn RngCore,
) -> Result<GradientAscentReport> {
    check_args(mu, sigma, n)?;
    if !(fd_step > 0.0) {
        return Err(TdlError::InvalidArgument("fd_step must be positive".into()));
    }
    let d = mu.len();
    let draws = NoiseDraws::draw(d, n, rng);
    let mut buf = Vec::with_capacity(d);
    let fit = |m: &[f64], s: &[f64], y: &[f64], buf: &mut Vec<f64>| {
        f64::from(u8::from(fitness_at(spec, m, s, y, buf)))
    };
    let f0: Vec<f64> = draws.iter().map(|y| fit(mu, sigma, y, &mut buf)).collect();
    let g_bar = f0.iter().sum::<f64>() / n as f64;

    let mut mean = Vec::with_capacity(d);
    let mut variance = Vec::with_capacity(d);
    for i in 0..d {
        let h = fd_step * sigma[i];
        let (mut up, mut dn) = (mu.to_vec(), mu.to_vec());
        up[i] += h;
        dn[i] -= h;
        let s2 = sigma[i] * sigma[i];
        let hs = fd_step * s2;
        let (mut s_up, mut s_dn) = (sigma.to_vec(), sigma.to_vec());
        s_up[i] = (s2 + hs).sqrt();
        s_dn[i] = (s2 - hs).sqrt();

        let mut buf2 = Vec::with_capacity(d);
        let mean_pairs: Vec<(f64, f64)> = draws
            .iter()
            .zip(&f0)
            .map(|(y, f)| {
                let lhs = nu * sigma[i] * y[i] * (f - g_bar);
                let diff = fit(&up, sigma, y, &mut buf2) - fit(&dn, sigma, y, &mut buf2);
                (lhs, nu * s2 * diff / (2.0 * h))
            })
            .collect();
        mean.push(IdentityCheck::from_pairs(mean_pairs.into_iter()));

        let var_pairs: Vec<(f64, f64)> = draws
            .iter()
            .zip(&f0)
            .map(|(y, f)| {
                let lhs = s2 * (y[i] * y[i] - 1.0) * (f - g_bar);
                let diff = fit(mu, &s_up, y, &mut buf2) - fit(mu, &s_dn, y, &mut buf2);
                (lhs, 2.0 * s2 * s2 * diff / (2.0 * hs))
            })
            .collect();
        variance.push(IdentityCheck::from_pairs(var_pairs.into_iter()));
    }
    Ok(GradientAscentReport { mean, variance })
}

/// Smooth test integrands for the Gaussian-smoothing gradient identities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `sum x_i`
    Linear,
    /// `sum x_i^2`
    Square,
    /// `sum x_i^3`
    Cubic,
    /// `exp(-||x||^2 / 2)`
    Gaussian,
}

impl TestFunction {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(c) => c,
            TestFunction::Linear => x.iter().sum(),
            TestFunction::Square => x.iter().map(|v| v * v).sum(),
            TestFunction::Cubic => x.iter().map(|v| v * v * v).sum(),
            TestFunction::Gaussian => (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(),
        }
    }
}

/// Per-dimension checks of `d/dmu E[f] = E[y f] / sigma` and
/// `d/d(sigma^2) E[f] = E[(y^2 - 1) f] / (2 sigma^2)`.
pub fn verify_lemma1(
    f: TestFunction,
    mu: &[f64],
    sigma: &[f64],
    n: usize,
    fd_step: f64,
    rng: &mut dyn RngCore,
) -> Result<GradientAscentReport> {
    check_args(mu, sigma, n)?;
    if !(fd_step > 0.0) {
        return Err(TdlError::InvalidArgument("fd_step must be positive".into()));
    }
    let d = mu.len();
    let draws = NoiseDraws::draw(d, n, rng);
    let point = |m: &[f64], s: &[f64], y: &[f64]| -> Vec<f64> {
        m.iter().zip(s).zip(y).map(|((m, s), y)| m + y * s).collect()
    };
    let f0: Vec<f64> = draws.iter().map(|y| f.eval(&point(mu, sigma, y))).collect();
    let f_bar = f0.iter().sum::<f64>() / n as f64;
    let mut mean = Vec::with_capacity(d);
    let mut variance = Vec::with_capacity(d);
    for i in 0..d {
        let h = fd_step * sigma[i];
        let (mut up, mut dn) = (mu.to_vec(), mu.to_vec());
        up[i] += h;
        dn[i] -= h;
        let s2 = sigma[i] * sigma[i];
        let hs = fd_step * s2;
        let (mut s_up, mut s_dn) = (sigma.to_vec(), sigma.to_vec());
        s_up[i] = (s2 + hs).sqrt();
        s_dn[i] = (s2 - hs).sqrt();
        mean.push(IdentityCheck::from_pairs(draws.iter().zip(&f0).map(|(y, fk)| {
            let fd = (f.eval(&point(&up, sigma, y)) - f.eval(&point(&dn, sigma, y))) / (2.0 * h);
            (fd, y[i] * (fk - f_bar) / sigma[i])
        })));
        variance.push(IdentityCheck::from_pairs(draws.iter().zip(&f0).map(|(y, fk)| {
            let fd = (f.eval(&point(mu, &s_up, y)) - f.eval(&point(mu, &s_dn, y))) / (2.0 * hs);
            (fd, (y[i] * y[i] - 1.0) * (fk - f_bar) / (2.0 * s2))
        })));
    }
    Ok(GradientAscentReport { mean, variance })
}

/// Window half-width, in standard deviations, searched for `D` in 1-D.
pub const REGION_WINDOW_SIGMAS: f64 = 12.0;
const REGION_GRID_HALF: usize = 2048;
pub const BOUNDARY_TOL: f64 = 1e-10;
pub const SIMPSON_TOL: f64 = 1e-8;

/// Components of `D` within `mu +- 12 sigma`, as offsets `u = x - mu`.
///
/// The scan grid is symmetric about `mu`, so a region symmetric about `mu`
/// yields exactly mirrored boundaries. Components narrower than the grid
/// spacing (`12 sigma / 2048`) can be missed.
pub fn region_components(spec: &FitnessSpec, mu: f64, sigma: f64) -> Result<Vec<(f64, f64)>> {
    check_args(&[mu], &[sigma], 1)?;
    let step = REGION_WINDOW_SIGMAS * sigma / REGION_GRID_HALF as f64;
    let inside = |u: f64| spec.fitness(&[mu + u]);
    let bisect = |mut a: f64, mut b: f64| {
        let ia = inside(a);
        while (b - a).abs() > BOUNDARY_TOL {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            if inside(m) == ia {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let n = 2 * REGION_GRID_HALF;
    let grid = |j: usize| {
        if j >= REGION_GRID_HALF {
            (j - REGION_GRID_HALF) as f64 * step
        } else {
            -((REGION_GRID_HALF - j) as f64 * step)
        }
    };
    let mut out = Vec::new();
    let mut start = inside(grid(0)).then(|| grid(0));
    for j in 0..n {
        let (a, b) = (grid(j), grid(j + 1));
        match (inside(a), inside(b)) {
            (false, true) => start = Some(bisect(a, b)),
            (true, false) => {
                out.push((start.take().unwrap(), bisect(a, b)));
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, grid(n)));
    }
    Ok(out)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * ((fa + fb) + 4.0 * fm))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth >= 50 || (depth >= 4 && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 0)
}

fn integrate_region<F: Fn(f64) -> f64>(parts: &[(f64, f64)], f: F, tol: f64) -> f64 {
    parts.iter().map(|&(a, b)| adaptive_simpson(&f, a, b, tol)).sum()
}

/// Moments of `f(u) = exp(-u^2 / 2 sigma^2)` over `D` (in offsets from mu).
fn region_moments(spec: &FitnessSpec, mu: f64, sigma: f64) -> Result<(Vec<(f64, f64)>, f64, f64, f64)> {
    let parts = region_components(spec, mu, sigma)?;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let tol = SIMPSON_TOL * sigma;
    let z = integrate_region(&parts, |u| (-u * u * inv).exp(), tol);
    if !(z > 1e-300) {
        return Err(TdlError::DegenerateRegion(format!(
            "D has no mass near mu = {mu}, sigma = {sigma}"
        )));
    }
    let m1 = integrate_region(&parts, |u| u * (-u * u * inv).exp(), tol);
    let m2 = integrate_region(&parts, |u| u * u * (-u * u * inv).exp(), tol * sigma * sigma);
    Ok((parts, z, m1, m2))
}

/// Residuals of the fixed-point equations in 1-D:
/// `r_mu = mu - int_D x f / int_D f`, `r_sigma = sigma^2 - int_D (x - mu)^2 f / int_D f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointResidual {
    pub r_mu: f64,
    pub r_sigma: f64,
}

pub fn fixed_point_residual(spec: &FitnessSpec, mu: f64, sigma: f64) -> Result<FixedPointResidual> {
    let (_, z, m1, m2) = region_moments(spec, mu, sigma)?;
    Ok(FixedPointResidual {
        r_mu: -m1 / z,
        r_sigma: sigma * sigma - m2 / z,
    })
}

/// One application of the map whose fixed points the residuals describe:
/// returns `(mu', sigma')`.
pub fn fixed_point_map(spec: &FitnessSpec, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    let r = fixed_point_residual(spec, mu, sigma)?;
    Ok((mu - r.r_mu, (sigma * sigma - r.r_sigma).sqrt()))
}

/// `(mu, sigma)` after each of `steps` map applications, starting point
/// included.
pub fn iterate_map(spec: &FitnessSpec, mu: f64, sigma: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = vec![(mu, sigma)];
    let (mut m, mut s) = (mu, sigma);
    for _ in 0..steps {
        (m, s) = fixed_point_map(spec, m, s)?;
        out.push((m, s));
    }
    Ok(out)
}

/// The one-step expected update in 1-D from integrals of the smoothing
/// kernel's derivatives over `D`:
/// `mu' - mu = -(nu sigma / sqrt(2 pi)) int_D f'` and
/// `sigma'^2 - sigma^2 = (sigma^3 / sqrt(2 pi)) int_D f''`.
pub fn quadrature_update(spec: &FitnessSpec, mu: f64, sigma: f64, nu: f64) -> Result<(f64, f64)> {
    let parts = region_components(spec, mu, sigma)?;
    let s2 = sigma * sigma;
    let inv = 1.0 / (2.0 * s2);
    let tol = SIMPSON_TOL;
    let d1 = integrate_region(&parts, |u| -u / s2 * (-u * u * inv).exp(), tol / sigma);
    let d2 = integrate_region(
        &parts,
        |u| (u * u / (s2 * s2) - 1.0 / s2) * (-u * u * inv).exp(),
        tol / s2,
    );
    let c = (2.0 * PI).sqrt();
    Ok((-nu * sigma / c * d1, sigma * s2 / c * d2))
}

/// One cell of the target-parameter sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    pub sigma: f64,
    pub mu_prime: Estimate,
    pub sigma_sq_prime: Estimate,
    /// The same update from quadrature, when `D` has mass.
    pub quadrature: Option<(f64, f64)>,
}

/// Expected targets over a `(mu, sigma)` grid in 1-D.
pub fn target_sweep(
    spec: &FitnessSpec,
    mus: &[f64],
    sigmas: &[f64],
    nu: f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(mus.len() * sigmas.len());
    for &sigma in sigmas {
        for &mu in mus {
            let t = expected_target(spec, &[mu], &[sigma], nu, n, rng)?;
            let quadrature = match quadrature_update(spec, mu, sigma, nu) {
                Ok((dm, ds)) => Some((mu + dm, sigma * sigma + ds)),
                Err(TdlError::DegenerateRegion(_)) => None,
                Err(e) => return Err(e),
            };
            out.push(SweepPoint {
                mu,
                sigma,
                mu_prime: t.mu_prime[0],
                sigma_sq_prime: t.sigma_sq_prime[0],
                quadrature,
            });
        }
    }
    Ok(out)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(
        "mu,sigma,mu_prime,mu_prime_se,sigma_sq_prime,sigma_sq_prime_se,mu_prime_quad,sigma_sq_prime_quad\n",
    );
    for p in points {
        let (qm, qs) = p
            .quadrature
            .map_or((String::new(), String::new()), |(a, b)| (format!("{a:e}"), format!("{b:e}")));
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{qm},{qs}",
            p.mu, p.sigma, p.mu_prime.value, p.mu_prime.std_error, p.sigma_sq_prime.value,
            p.sigma_sq_prime.std_error
        );
    }
    out
}
