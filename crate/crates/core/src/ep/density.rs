use std::f64::consts::{E, PI};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::integrate_panels;

/// Absolute tolerance for the entropy quadrature.
pub const QUAD_TOL: f64 = 1e-10;
/// Densities below this are treated as zero inside `-p ln p`.
pub const DENSITY_FLOOR: f64 = 1e-16;
/// Left end of the Wald support (the density vanishes faster than any power at 0).
pub const WALD_LEFT: f64 = 1e-9;

const GRID_START: usize = 4096;
const GRID_MAX: usize = 1 << 22;
const GRID_H_TOL: f64 = 1e-7;
const KAPPA_STEPS: [f64; 2] = [1e-3, 1e-4];
const KAPPA_TOL: f64 = 1e-7;

/// A scalar source density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensitySpec {
    Gaussian { variance: f64 },
    /// Inverse Gaussian with mean `mu` and shape `lambda`.
    Wald { mu: f64, lambda: f64 },
    /// Piecewise-linear interpolant of `values` on the increasing `grid`, zero outside.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl DensitySpec {
    pub fn gaussian(variance: f64) -> Self {
        DensitySpec::Gaussian { variance }
    }

    pub fn wald(mu: f64, lambda: f64) -> Self {
        DensitySpec::Wald { mu, lambda }
    }

    /// Uniform density on `[a, b]` as a two-knot table.
    pub fn uniform(a: f64, b: f64) -> Self {
        let h = 1.0 / (b - a);
        DensitySpec::Tabulated { grid: vec![a, b], values: vec![h, h] }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, DensitySpec::Gaussian { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDensity(m));
        match self {
            DensitySpec::Gaussian { variance } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return bad(format!("Gaussian variance {variance} must be positive and finite"));
                }
            }
            DensitySpec::Wald { mu, lambda } => {
                if !(*mu > 0.0 && mu.is_finite() && *lambda > 0.0 && lambda.is_finite()) {
                    return bad(format!("Wald parameters mu = {mu}, lambda = {lambda} must be positive"));
                }
            }
            DensitySpec::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return bad("table needs at least two knots and one value per knot".into());
                }
                if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("table grid must be finite and strictly increasing".into());
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("table values must be finite and nonnegative".into());
                }
                let mass = self.cdf(grid[grid.len() - 1]);
                if (mass - 1.0).abs() > QUAD_TOL * grid.len() as f64 {
                    return bad(format!("table integrates to {mass}, expected 1"));
                }
            }
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            DensitySpec::Gaussian { variance } => (-x * x / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt(),
            DensitySpec::Wald { mu, lambda } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let log = 0.5 * (lambda / (2.0 * PI * x * x * x)).ln() - lambda * (x - mu).powi(2) / (2.0 * mu * mu * x);
                log.exp()
            }
            DensitySpec::Tabulated { grid, values } => {
                let n = grid.len();
                if x < grid[0] || x > grid[n - 1] {
                    return 0.0;
                }
                let j = grid.partition_point(|g| *g <= x).clamp(1, n - 1);
                let (x0, x1) = (grid[j - 1], grid[j]);
                let w = (x - x0) / (x1 - x0);
                values[j - 1] * (1.0 - w) + values[j] * w
            }
        }
    }

    /// Mass of the tabulated interpolant left of `x`; exact for piecewise-linear tables.
    fn cdf(&self, x: f64) -> f64 {
        TableCdf::new(self).at(x)
    }

    /// Interval outside which the density is negligible for quadrature.
    pub fn support(&self) -> (f64, f64) {
        match self {
            DensitySpec::Gaussian { variance } => {
                let r = 40.0 * variance.sqrt();
                (-r, r)
            }
            DensitySpec::Wald { mu, lambda } => (WALD_LEFT, mu + 40.0 * (mu.powi(3) / lambda).sqrt()),
            DensitySpec::Tabulated { grid, .. } => (grid[0], grid[grid.len() - 1]),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            DensitySpec::Gaussian { variance } => *variance,
            DensitySpec::Wald { mu, lambda } => mu.powi(3) / lambda,
            DensitySpec::Tabulated { grid, .. } => {
                // Simpson is exact per segment: x^k p(x) has degree ≤ 3.
                let moment = |k: i32| -> f64 {
                    grid.windows(2)
                        .map(|w| {
                            let m = 0.5 * (w[0] + w[1]);
                            let f = |x: f64| x.powi(k) * self.pdf(x);
                            (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(m) + f(w[1]))
                        })
                        .sum()
                };
                let mean = moment(1);
                moment(2) - mean * mean
            }
        }
    }
}

struct TableCdf<'a> {
    density: &'a DensitySpec,
    grid: &'a [f64],
    cum: Vec<f64>,
}

impl<'a> TableCdf<'a> {
    fn new(density: &'a DensitySpec) -> Self {
        let DensitySpec::Tabulated { grid, values } = density else {
            unreachable!("cdf is only used for tables")
        };
        let mut cum = vec![0.0; grid.len()];
        for j in 1..grid.len() {
            cum[j] = cum[j - 1] + 0.5 * (grid[j] - grid[j - 1]) * (values[j - 1] + values[j]);
        }
        Self { density, grid, cum }
    }

    fn at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return 0.0;
        }
        if x >= self.grid[n - 1] {
            return self.cum[n - 1];
        }
        let j = self.grid.partition_point(|g| *g <= x) - 1;
        let x0 = self.grid[j];
        self.cum[j] + 0.5 * (x - x0) * (self.density.pdf(x0) + self.density.pdf(x))
    }
}

/// Entropy power e^{2h}/(2πe) of a differential entropy `h` in nats.
pub fn entropy_power_of(h: f64) -> f64 {
    (2.0 * h).exp() / (2.0 * PI * E)
}

fn neg_p_log_p(p: f64) -> f64 {
    if p < DENSITY_FLOOR {
        0.0
    } else {
        -p * p.ln()
    }
}

fn entropy_quadrature(d: &DensitySpec, tol: f64) -> Result<f64> {
    let f = |x: f64| neg_p_log_p(d.pdf(x));
    match d {
        DensitySpec::Tabulated { grid, .. } => grid
            .windows(2)
            .map(|w| integrate_panels(&f, w[0], w[1], 4, tol / (grid.len() - 1) as f64))
            .sum(),
        _ => {
            let (a, b) = d.support();
            integrate_panels(&f, a, b, 256, tol)
        }
    }
}

/// Differential entropy in nats by adaptive quadrature, accepted once halving
/// the tolerance moves the value by less than 1e-6.
pub fn differential_entropy(density: &DensitySpec) -> Result<f64> {
    density.validate()?;
    if let DensitySpec::Gaussian { variance } = density {
        return Ok(0.5 * (2.0 * PI * E * variance).ln());
    }
    let h = entropy_quadrature(density, QUAD_TOL)?;
    let h2 = entropy_quadrature(density, 0.5 * QUAD_TOL)?;
    if (h - h2).abs() >= 1e-6 {
        return Err(Error::QuadratureNotConverged(format!("entropy moved by {:e} on tolerance halving", (h - h2).abs())));
    }
    Ok(h2)
}

/// Samples of the density on the cell centers of a uniform grid; tables use
/// exact cell averages so that jumps at the table ends do not alias.
fn sample(d: &DensitySpec, lo: f64, step: f64, n: usize) -> Vec<f64> {
    match d {
        DensitySpec::Tabulated { .. } => {
            let cdf = TableCdf::new(d);
            let mut prev = cdf.at(lo);
            (0..n)
                .map(|i| {
                    let next = cdf.at(lo + step * (i + 1) as f64);
                    let v = (next - prev) / step;
                    prev = next;
                    v
                })
                .collect()
        }
        _ => (0..n).map(|i| d.pdf(lo + step * (i as f64 + 0.5))).collect(),
    }
}

/// Differential entropies of X + √v·G for each `v` (v = 0 allowed), all computed on a
/// shared uniform grid. The smoothing is applied as the exact Gaussian multiplier in
/// the Fourier domain; the grid doubles until every entropy moves by less than 1e-7.
pub fn smoothed_entropies(density: &DensitySpec, variances: &[f64]) -> Result<Vec<f64>> {
    refine_grid(density, variances, |prev, cur| prev.iter().zip(cur).all(|(x, y)| (x - y).abs() < GRID_H_TOL))
}

fn refine_grid(
    density: &DensitySpec,
    variances: &[f64],
    settled: impl Fn(&[f64], &[f64]) -> bool,
) -> Result<Vec<f64>> {
    density.validate()?;
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("smoothing variances must be finite and nonnegative".into()));
    }
    let (a, b) = density.support();
    let vmax = variances.iter().copied().fold(0.0, f64::max);
    let pad = 12.0 * vmax.sqrt() + 0.02 * (b - a);
    let (lo, len) = (a - pad, b - a + 2.0 * pad);
    let mut planner = FftPlanner::<f64>::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut n = GRID_START;
    while n <= GRID_MAX {
        let step = len / n as f64;
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec: Vec<Complex<f64>> = sample(density, lo, step, n).into_iter().map(|v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut spec);
        let hs: Vec<f64> = variances
            .par_iter()
            .map(|&v| {
                let mut buf = spec.clone();
                if v > 0.0 {
                    for (i, c) in buf.iter_mut().enumerate() {
                        let f = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                        let w = 2.0 * PI * f / len;
                        *c *= (-0.5 * v * w * w).exp();
                    }
                }
                inv.process(&mut buf);
                let scale = 1.0 / n as f64;
                buf.iter().map(|c| neg_p_log_p(c.re * scale)).sum::<f64>() * step
            })
            .collect();
        if let Some(p) = &prev {
            if settled(p, &hs) {
                return Ok(hs);
            }
        }
        prev = Some(hs);
        n *= 2;
    }
    Err(Error::QuadratureNotConverged(format!("smoothing grid did not settle below {GRID_MAX} points")))
}

/// Entropy power N(X + √v·G) of the source smoothed by independent Gaussian noise of variance `v`.
pub fn smoothed_entropy_power(density: &DensitySpec, v: f64) -> Result<f64> {
    Ok(smoothed_entropy_powers(density, &[v])?[0])
}

/// Vector form of [`smoothed_entropy_power`] sharing one grid.
pub fn smoothed_entropy_powers(density: &DensitySpec, variances: &[f64]) -> Result<Vec<f64>> {
    density.validate()?;
    if let DensitySpec::Gaussian { variance } = density {
        return Ok(variances.iter().map(|v| variance + v).collect());
    }
    Ok(smoothed_entropies(density, variances)?.into_iter().map(entropy_power_of).collect())
}

/// Scalar summaries of a source used by every entropy-power bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub variance: f64,
    pub entropy: f64,
    pub entropy_power: f64,
    /// Derivative of the entropy power under Gaussian smoothing at t = 0; absent
    /// when only the powers were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// Returns (N(X), κ_X). κ comes from forward differences of N(X + √t G) at t = 1e-3 and
/// 1e-4 combined by Richardson extrapolation; both differences use the smoothing grid
/// for the t = 0 reference so discretization errors cancel.
pub fn entropy_power_and_kappa(density: &DensitySpec) -> Result<(f64, f64)> {
    let p = source_profile(density)?;
    Ok((p.entropy_power, p.kappa.expect("profile carries kappa")))
}

/// Variance, entropy and entropy power; κ is left out.
pub fn source_powers(density: &DensitySpec) -> Result<SourceProfile> {
    let entropy = differential_entropy(density)?;
    Ok(SourceProfile { variance: density.variance(), entropy, entropy_power: entropy_power_of(entropy), kappa: None })
}

/// [`source_powers`] plus κ_X. Sources with infinite Fisher information (jumps in the
/// density) have κ = ∞ and fail here with `QuadratureNotConverged`.
pub fn source_profile(density: &DensitySpec) -> Result<SourceProfile> {
    let powers = source_powers(density)?;
    let kappa = if density.is_gaussian() {
        1.0
    } else {
        // The difference quotients amplify entropy errors by ~1/t, so refine until κ itself settles.
        let hs = refine_grid(density, &[0.0, KAPPA_STEPS[0], KAPPA_STEPS[1]], |p, c| {
            (richardson_kappa(p) - richardson_kappa(c)).abs() < KAPPA_TOL
        })?;
        richardson_kappa(&hs)
    };
    Ok(SourceProfile { kappa: Some(kappa), ..powers })
}

fn richardson_kappa(hs: &[f64]) -> f64 {
    let n0 = entropy_power_of(hs[0]);
    let d = |i: usize| (entropy_power_of(hs[i + 1]) - n0) / KAPPA_STEPS[i];
    (10.0 * d(1) - d(0)) / 9.0
}
