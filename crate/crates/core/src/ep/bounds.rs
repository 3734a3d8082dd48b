use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::{differential_entropy, entropy_power_of, smoothed_entropy_power, smoothed_entropy_powers, source_powers, source_profile, DensitySpec, SourceProfile};
use crate::error::{Error, Result};
use crate::model::subset::SubsetMask;
use crate::vg::GammaVector;

/// Tolerance on the entropy-power subset bound's log argument before it counts as below one.
pub const LOG_ARG_TOL: f64 = 1e-9;

/// max(0, ln x).
pub fn log_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Independent Gaussian sensor noises with variances σ_k².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNoiseSpec {
    pub variances: Vec<f64>,
}

impl SensorNoiseSpec {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        let s = Self { variances };
        s.validate()?;
        Ok(s)
    }

    pub fn equal(k: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.variances.is_empty() {
            return Err(Error::InvalidInput("at least one sensor is required".into()));
        }
        for (k, &s) in self.variances.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("noise variance of sensor {} is {s}", k + 1)));
            }
        }
        Ok(())
    }

    pub fn num_sensors(&self) -> usize {
        self.variances.len()
    }

    /// Harmonic mean of the noise variances over `members` (0-based indices).
    pub fn harmonic_mean(&self, members: &[usize]) -> f64 {
        let inv: f64 = members.iter().map(|&k| 1.0 / self.variances[k]).sum();
        members.len() as f64 / inv
    }

    /// Variance of the noise in the sufficient statistic of X given the sensors in `members`.
    pub fn statistic_noise(&self, members: &[usize]) -> f64 {
        1.0 / members.iter().map(|&k| 1.0 / self.variances[k]).sum::<f64>()
    }
}

fn check_bound_inputs(noise: &SensorNoiseSpec, rates: &[f64], gammas: &GammaVector, subset: SubsetMask) -> Result<()> {
    noise.validate()?;
    let k = noise.num_sensors();
    if rates.len() != k || subset.num_sensors() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} rates and a subset over {} sensors for K = {k}",
            rates.len(),
            subset.num_sensors()
        )));
    }
    if rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidRates("rates must be nonnegative".into()));
    }
    gammas.validate(&noise.variances)
}

fn rate_terms(noise: &SensorNoiseSpec, rates: &[f64], gammas: &[f64], members: &[usize]) -> f64 {
    members
        .iter()
        .map(|&k| {
            let keep = 1.0 - gammas[k] * noise.variances[k];
            rates[k] + 0.5 * if keep > 0.0 { keep.ln() } else { f64::NEG_INFINITY }
        })
        .sum()
}

/// Shared shape of the entropy-power upper bound and the variance-based lower bound:
/// `power_of(v)` is the power (or entropy power) of X + √v·G, and `source_power` that of X.
fn subset_bound(
    noise: &SensorNoiseSpec,
    rates: &[f64],
    gammas: &[f64],
    subset: SubsetMask,
    source_power: f64,
    power_of: impl FnOnce(f64) -> Result<f64>,
) -> Result<(f64, Option<f64>)> {
    let own = rate_terms(noise, rates, gammas, &subset.members());
    if subset.is_full() {
        return Ok((own, None));
    }
    let sc = subset.complement_members();
    let hm = noise.harmonic_mean(&sc);
    let y_power = power_of(noise.statistic_noise(&sc))?;
    let slack: f64 = sc.iter().map(|&k| 1.0 / noise.variances[k] - gammas[k]).sum();
    let arg = sc.len() as f64 * y_power / hm - source_power * slack;
    Ok((0.5 * arg.ln() + own, Some(arg)))
}

/// Upper bound on E for subset S given the test-channel parameters γ. The log
/// argument is at least one in exact arithmetic; a smaller value means the
/// entropy-power evaluation is inaccurate and is reported as an error.
pub fn thm3_upper_bound(
    density: &DensitySpec,
    noise: &SensorNoiseSpec,
    rates: &[f64],
    gammas: &GammaVector,
    subset: SubsetMask,
) -> Result<f64> {
    check_bound_inputs(noise, rates, gammas, subset)?;
    density.validate()?;
    let n_x = if subset.is_full() { 0.0 } else { source_entropy_power(density)? };
    let (v, arg) = subset_bound(noise, rates, &gammas.0, subset, n_x, |s| smoothed_entropy_power(density, s))?;
    match arg {
        Some(a) if a < 1.0 - LOG_ARG_TOL => Err(Error::LogArgumentBelowOne { value: a }),
        _ => Ok(v),
    }
}

/// Entropy-power subset bounds for one source and noise configuration, with every
/// entropy power precomputed so rates and γ can be swept cheaply.
#[derive(Debug, Clone)]
pub struct Thm3Evaluator {
    noise: SensorNoiseSpec,
    source_power: f64,
    /// N(Y(S^c)) indexed by subset bits; unused for the full set.
    statistic_powers: Vec<f64>,
}

impl Thm3Evaluator {
    pub fn new(density: &DensitySpec, noise: &SensorNoiseSpec) -> Result<Self> {
        noise.validate()?;
        let k = noise.num_sensors();
        let strict: Vec<SubsetMask> = SubsetMask::all(k).filter(|s| !s.is_full()).collect();
        let vs: Vec<f64> = strict.iter().map(|s| noise.statistic_noise(&s.complement_members())).collect();
        let mut statistic_powers = vec![f64::NAN; 1 << k];
        for (s, p) in strict.iter().zip(smoothed_entropy_powers(density, &vs)?) {
            statistic_powers[s.bits() as usize] = p;
        }
        Ok(Self { noise: noise.clone(), source_power: source_entropy_power(density)?, statistic_powers })
    }

    fn eval(&self, rates: &[f64], gammas: &GammaVector, subset: SubsetMask) -> Result<(f64, Option<f64>)> {
        check_bound_inputs(&self.noise, rates, gammas, subset)?;
        let n_y = self.statistic_powers[subset.bits() as usize];
        subset_bound(&self.noise, rates, &gammas.0, subset, self.source_power, |_| Ok(n_y))
    }

    pub fn bound(&self, rates: &[f64], gammas: &GammaVector, subset: SubsetMask) -> Result<f64> {
        match self.eval(rates, gammas, subset)? {
            (_, Some(a)) if a < 1.0 - LOG_ARG_TOL => Err(Error::LogArgumentBelowOne { value: a }),
            (v, _) => Ok(v),
        }
    }

    /// Log argument for a strict subset, without the below-one check.
    pub fn log_argument(&self, gammas: &GammaVector, subset: SubsetMask) -> Result<f64> {
        let zeros = vec![0.0; self.noise.num_sensors()];
        self.eval(&zeros, gammas, subset)?
            .1
            .ok_or_else(|| Error::InvalidInput("the full set has no log term".into()))
    }
}

/// Log argument of [`thm3_upper_bound`] for a strict subset.
pub fn thm3_log_argument(
    density: &DensitySpec,
    noise: &SensorNoiseSpec,
    gammas: &GammaVector,
    subset: SubsetMask,
) -> Result<f64> {
    let rates = vec![0.0; noise.num_sensors()];
    check_bound_inputs(noise, &rates, gammas, subset)?;
    if subset.is_full() {
        return Err(Error::InvalidInput("the full set has no log term".into()));
    }
    let n_x = source_entropy_power(density)?;
    let (_, arg) = subset_bound(noise, &rates, &gammas.0, subset, n_x, |s| smoothed_entropy_power(density, s))?;
    Ok(arg.expect("strict subset"))
}

fn source_entropy_power(density: &DensitySpec) -> Result<f64> {
    if let DensitySpec::Gaussian { variance } = density {
        return Ok(*variance);
    }
    Ok(entropy_power_of(differential_entropy(density)?))
}

/// Achievable lower bound on E for subset S with powers in place of entropy powers.
pub fn cor3_lower_bound(
    sigma_x2: f64,
    noise: &SensorNoiseSpec,
    rates: &[f64],
    gammas: &GammaVector,
    subset: SubsetMask,
) -> Result<f64> {
    if !(sigma_x2 > 0.0 && sigma_x2.is_finite()) {
        return Err(Error::InvalidInput(format!("source variance {sigma_x2} must be positive")));
    }
    check_bound_inputs(noise, rates, gammas, subset)?;
    Ok(subset_bound(noise, rates, &gammas.0, subset, sigma_x2, |s| Ok(sigma_x2 + s))?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2pBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Single-sensor bounds on E(R): power-based lower and entropy-power-based upper.
pub fn p2p_bounds(density: &DensitySpec, sigma_z2: f64, rate: f64) -> Result<P2pBounds> {
    check_noise(sigma_z2)?;
    if !(rate >= 0.0) {
        return Err(Error::InvalidRates(format!("rate {rate} must be nonnegative")));
    }
    let p = source_powers(density)?;
    let n_y = smoothed_entropy_power(density, sigma_z2)?;
    let shrink = (-2.0 * rate).exp();
    Ok(P2pBounds {
        lower: 0.5 * log_plus((p.variance + sigma_z2) / (p.variance * shrink + sigma_z2)),
        upper: 0.5 * log_plus(n_y / (p.entropy_power * shrink + sigma_z2)),
    })
}

fn check_noise(sigma_z2: f64) -> Result<()> {
    if !(sigma_z2 > 0.0 && sigma_z2.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance {sigma_z2} must be positive")));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumRateBounds {
    /// Minimal sum rate any scheme needs for exponent E.
    pub lower: f64,
    /// Sum rate sufficient for exponent E.
    pub upper: f64,
    /// Difference of the two log terms, taken before the lower bound is clamped at zero.
    pub gap: f64,
}

/// Sum-rate bounds from precomputed powers; `n_y` is N(X + (σ_Z²/K)^{1/2} G).
pub fn sum_rate_bounds_from(profile: &SourceProfile, n_y: f64, sigma_z2: f64, k: usize, e: f64) -> Result<SumRateBounds> {
    let kf = k as f64;
    let load = sigma_z2 * (2.0 * e).exp();
    let (ent_room, pow_room) = (kf * n_y - load, kf * (profile.variance + sigma_z2 / kf) - load);
    if !(e >= 0.0) || !(ent_room > 0.0) || !(pow_room > 0.0) {
        return Err(Error::ExponentOutOfDomain { exponent: e });
    }
    Ok(SumRateBounds {
        lower: e + 0.5 * kf * log_plus(kf * profile.entropy_power / ent_room),
        upper: e + 0.5 * kf * (kf * profile.variance / pow_room).ln(),
        gap: 0.5 * kf * log_plus(profile.variance / profile.entropy_power * ent_room / pow_room),
    })
}

/// Sum-rate bounds for K sensors with equal noise variance σ_Z².
pub fn sum_rate_bounds(density: &DensitySpec, sigma_z2: f64, k: usize, e: f64) -> Result<SumRateBounds> {
    check_noise(sigma_z2)?;
    check_k(k)?;
    let p = source_powers(density)?;
    let n_y = smoothed_entropy_power(density, sigma_z2 / k as f64)?;
    sum_rate_bounds_from(&p, n_y, sigma_z2, k, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapLimitBound {
    /// Bound on lim Δ(K) at the given exponent.
    pub with_exponent: f64,
    /// Exponent-free bound.
    pub uniform: f64,
}

/// Limit bounds from a profile that carries κ.
pub fn gap_limit_bound_from(profile: &SourceProfile, sigma_z2: f64, e: f64) -> Result<GapLimitBound> {
    let kappa = profile.kappa.ok_or_else(|| Error::InvalidInput("source profile lacks kappa".into()))?;
    let inv_var = 1.0 / profile.variance;
    let head = kappa / profile.entropy_power - inv_var;
    let tail = (2.0 * e).exp() * (1.0 / profile.entropy_power - inv_var);
    Ok(GapLimitBound { with_exponent: 0.5 * sigma_z2 * (head - tail).max(0.0), uniform: 0.5 * sigma_z2 * head })
}

/// Large-K limit bounds on the sum-rate gap.
pub fn gap_limit_bound(density: &DensitySpec, sigma_z2: f64, e: f64) -> Result<GapLimitBound> {
    check_noise(sigma_z2)?;
    gap_limit_bound_from(&source_profile(density)?, sigma_z2, e)
}

pub fn rate_redundancy_from(profile: &SourceProfile, n_y: f64, sigma_z2: f64, k: usize, e: f64) -> Result<f64> {
    let kf = k as f64;
    let load = sigma_z2 / kf * (2.0 * e).exp();
    let room = n_y - load;
    let factor = 1.0 + sigma_z2 / (kf * profile.variance) * (1.0 - (2.0 * e).exp());
    if !(e >= 0.0) || !(room > 0.0) || !(factor > 0.0) {
        return Err(Error::ExponentOutOfDomain { exponent: e });
    }
    Ok(0.5 * (kf * (profile.entropy_power / room).ln() + factor.ln()).max(0.0))
}

/// Lower bound on the extra sum rate paid by K separate sensors over one sensor seeing all observations.
pub fn rate_redundancy_bound(density: &DensitySpec, sigma_z2: f64, k: usize, e: f64) -> Result<f64> {
    check_noise(sigma_z2)?;
    check_k(k)?;
    let p = source_powers(density)?;
    let n_y = smoothed_entropy_power(density, sigma_z2 / k as f64)?;
    rate_redundancy_from(&p, n_y, sigma_z2, k, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCurveRow {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub delta: f64,
    pub limit_bound_with_e: f64,
    pub limit_bound_uniform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub schema_version: String,
    pub profile: SourceProfile,
    pub sigma_z2: f64,
    /// (K, E) points with σ_Z² e^{2E} ≥ K·N(Y(K)), where the bounds are undefined.
    pub skipped: usize,
    pub rows: Vec<GapCurveRow>,
    /// Whether Δ grew with K and shrank with E on this grid; informative only.
    pub monotone_trend: bool,
}

/// Δ(K) over K = 1..k_max and the exponent grid, sorted by K then E.
pub fn gap_curve(density: &DensitySpec, sigma_z2: f64, k_max: usize, e_grid: &[f64]) -> Result<GapCurve> {
    check_noise(sigma_z2)?;
    check_k(k_max)?;
    let profile = source_profile(density)?;
    let smoothing: Vec<f64> = (1..=k_max).map(|k| sigma_z2 / k as f64).collect();
    let n_ys = smoothed_entropy_powers(density, &smoothing)?;
    let per_k: Vec<Vec<Option<GapCurveRow>>> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            e_grid
                .iter()
                .map(|&e| {
                    let b = sum_rate_bounds_from(&profile, n_ys[k - 1], sigma_z2, k, e).ok()?;
                    let lim = gap_limit_bound_from(&profile, sigma_z2, e).ok()?;
                    Some(GapCurveRow {
                        k,
                        e,
                        delta: b.gap,
                        limit_bound_with_e: lim.with_exponent,
                        limit_bound_uniform: lim.uniform,
                    })
                })
                .collect()
        })
        .collect();
    let total = k_max * e_grid.len();
    let rows: Vec<GapCurveRow> = per_k.iter().flatten().flatten().copied().collect();
    let monotone_trend = trend_holds(&per_k);
    Ok(GapCurve {
        schema_version: crate::SCHEMA_VERSION.into(),
        profile,
        sigma_z2,
        skipped: total - rows.len(),
        rows,
        monotone_trend,
    })
}

fn trend_holds(per_k: &[Vec<Option<GapCurveRow>>]) -> bool {
    const SLACK: f64 = 1e-9;
    let along_e = per_k.iter().all(|row| {
        let ds: Vec<f64> = row.iter().flatten().map(|r| r.delta).collect();
        ds.windows(2).all(|w| w[1] <= w[0] + SLACK)
    });
    let along_k = per_k.windows(2).all(|w| {
        w[0].iter().zip(&w[1]).all(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => b.delta + SLACK >= a.delta,
            _ => true,
        })
    });
    along_e && along_k
}
