use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use rateex_core::dm::{evaluate_theorem1_bound, grid_search_dm_exponent, GridSearchOptions};
use rateex_core::ep::{
    gap_curve, p2p_bounds, rate_redundancy_from, smoothed_entropy_power, source_powers, source_profile,
    sum_rate_bounds_from, gap_limit_bound_from, DensitySpec, GapLimitBound, P2pBounds, SourceProfile,
    SumRateBounds,
};
use rateex_core::qbt::{
    empirical_exponent_curve, np_solve, qbt_simulate, EncoderSpec, GaussianSimModel, NpInstance, SimConfig,
    SimSource, DEFAULT_TYPICALITY_CONSTANT,
};
use rateex_core::vg::{one_encoder_region, optimize_scalar_exponent, optimize_vg_exponent, OmegaStructure, VgBoundReport};
use rateex_core::{
    Convention, DiscreteHTInstance, GaussianNetworkModel, OmegaSet, RawDiscreteInstance, RawGaussianModel,
    TestChannelFamily, SCHEMA_VERSION,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{arg_error, fmt_num, from_value, parse_counts, parse_grid, parse_list, read_json, to_json, Counts, Csv, Grid, List};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Real,
    Complex,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Real => Convention::Real,
            ConventionArg::Complex => Convention::Complex,
        }
    }
}

/// Divisor applied to nat-valued CSV columns.
fn unit(bits: bool) -> f64 {
    if bits { LN_2 } else { 1.0 }
}

/// Reads an object that is either `T` itself or carries `T` under `key`, so a
/// report from one run can feed the next.
fn nested_or_whole<T: serde::de::DeserializeOwned>(path: &Path, key: &str, what: &str) -> Result<T> {
    let mut v = read_json(path)?;
    if let Some(inner) = v.get_mut(key) {
        if inner.is_object() || inner.is_array() {
            let inner = inner.take();
            if let Ok(t) = serde_json::from_value(inner.clone()) {
                return Ok(t);
            }
            // `key` might be a field of T itself.
            v[key] = inner;
        }
    }
    from_value(v, what)
}

#[derive(Args, Debug)]
pub struct VgRegionArgs {
    /// Gaussian network model (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Per-sensor rates in nats, comma separated.
    #[arg(long, value_parser = parse_list)]
    pub rates: List,
    /// Evaluate at these Ω matrices instead of optimizing; a previous report is accepted.
    #[arg(long)]
    pub omegas: Option<PathBuf>,
    /// Overrides the convention recorded in the model.
    #[arg(long, value_enum)]
    pub convention: Option<ConventionArg>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn vg_region(a: &VgRegionArgs) -> Result<String> {
    let mut raw: RawGaussianModel = from_value(read_json(&a.input)?, "Gaussian model")?;
    if let Some(c) = a.convention {
        raw.convention = c.into();
    }
    // Real vectors have half the entropy of complex ones with the same covariance, so the
    // real region at R is half the complex region at 2R with identical Ω.
    let real = raw.convention == Convention::Real;
    raw.convention = Convention::Complex;
    let model = GaussianNetworkModel::validate(&raw)?;
    let scale = if real { 2.0 } else { 1.0 };
    let rates: Vec<f64> = a.rates.0.iter().map(|r| r * scale).collect();
    let mut report = match &a.omegas {
        Some(p) => {
            let om: OmegaSet = nested_or_whole(p, "omegas", "Omega set")?;
            optimize_vg_exponent(&model, &rates, OmegaStructure::GivenOmegas, Some(&om))?
        }
        None if model.num_sensors() == 1 && rates.len() == 1 => one_encoder_region(&model, rates[0])?,
        None => optimize_vg_exponent(&model, &rates, OmegaStructure::Diagonal, None)?,
    };
    if real {
        halve(&mut report);
    }
    #[derive(Serialize)]
    struct Out<'a> {
        convention: Convention,
        rates: &'a [f64],
        #[serde(flatten)]
        report: &'a VgBoundReport,
    }
    let conv = if real { Convention::Real } else { Convention::Complex };
    to_json(&Out { convention: conv, rates: &a.rates.0, report: &report })
}

fn halve(r: &mut VgBoundReport) {
    r.exponent *= 0.5;
    r.per_subset.values_mut().for_each(|v| *v *= 0.5);
}

#[derive(Args, Debug)]
pub struct ScalarRegionArgs {
    /// Source variance σ_X².
    #[arg(long)]
    pub sigma_x2: f64,
    /// Sensor noise variances, comma separated.
    #[arg(long, value_parser = parse_list)]
    pub sigmas: List,
    /// One rate vector per occurrence; each yields a CSV row.
    #[arg(long, value_parser = parse_list, required = true)]
    pub rates: Vec<List>,
    #[arg(long, value_enum, default_value = "complex")]
    pub convention: ConventionArg,
    /// Report rates and exponents in bits.
    #[arg(long)]
    pub bits: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn scalar_region(a: &ScalarRegionArgs) -> Result<String> {
    let k = a.sigmas.0.len();
    let u = unit(a.bits);
    let mut header: Vec<String> = (1..=k).map(|i| format!("rate_{i}")).collect();
    header.push("exponent".into());
    header.extend((1..=k).map(|i| format!("gamma_{i}")));
    let mut csv = Csv::new(&header);
    let real = a.convention == ConventionArg::Real;
    for List(rates) in &a.rates {
        if rates.len() != k {
            return Err(rateex_core::Error::InvalidRates(format!("{} rates for {k} sensors", rates.len())).into());
        }
        let (e, gamma) = if real {
            let doubled: Vec<f64> = rates.iter().map(|r| 2.0 * r).collect();
            let (e, g) = optimize_scalar_exponent(a.sigma_x2, &a.sigmas.0, &doubled)?;
            (0.5 * e, g)
        } else {
            optimize_scalar_exponent(a.sigma_x2, &a.sigmas.0, rates)?
        };
        let mut row: Vec<String> = rates.iter().map(|r| fmt_num(r / u)).collect();
        row.push(fmt_num(e / u));
        row.extend(gamma.0.iter().map(|&g| fmt_num(g)));
        csv.row(&row);
    }
    Ok(csv.into_string())
}

#[derive(Args, Debug)]
pub struct DmRegionArgs {
    /// Discrete instance (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Per-sensor rates in nats, comma separated.
    #[arg(long, value_parser = parse_list)]
    pub rates: List,
    /// Evaluate these test channels instead of searching; a previous report is accepted.
    #[arg(long)]
    pub channels: Option<PathBuf>,
    /// Simplex grid step is 1/resolution.
    #[arg(long, default_value_t = 10)]
    pub resolution: usize,
    /// Auxiliary alphabet sizes, comma separated (default |Y_k| + 1).
    #[arg(long, value_parser = parse_counts)]
    pub u_sizes: Option<Counts>,
    /// Maximum number of grid evaluations.
    #[arg(long)]
    pub budget: Option<u128>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn discrete_instance(v: Value) -> Result<DiscreteHTInstance> {
    let raw: RawDiscreteInstance = from_value(v, "discrete instance")?;
    Ok(DiscreteHTInstance::from_raw(&raw)?)
}

pub fn dm_region(a: &DmRegionArgs) -> Result<String> {
    let inst = discrete_instance(read_json(&a.input)?)?;
    if let Some(p) = &a.channels {
        let ch: TestChannelFamily = nested_or_whole(p, "channels", "test channels")?;
        return to_json(&evaluate_theorem1_bound(&inst, &ch, &a.rates.0)?);
    }
    let mut opts = GridSearchOptions::new(a.resolution);
    opts.u_sizes = a.u_sizes.clone().map(|c| c.0);
    if let Some(b) = a.budget {
        opts.budget = b;
    }
    to_json(&grid_search_dm_exponent(&inst, &a.rates.0, &opts)?)
}

#[derive(Args, Debug)]
pub struct QbtSimArgs {
    /// Discrete instance or quantized scalar Gaussian model (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Symbolwise encoders (JSON); identity quantizers by default.
    #[arg(long)]
    pub encoders: Option<PathBuf>,
    /// Rates in nats; required when the encoders bin their messages.
    #[arg(long, value_parser = parse_list)]
    pub rates: Option<List>,
    /// Blocklength.
    #[arg(long)]
    pub n: usize,
    /// Monte Carlo trials per hypothesis.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Type-I budget recorded with the result.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Seed for the ChaCha streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Typicality radius is this constant over √n.
    #[arg(long, default_value_t = DEFAULT_TYPICALITY_CONSTANT)]
    pub typicality_constant: f64,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn sim_source(v: Value) -> Result<SimSource> {
    if v.get("sigma_x2").is_some() {
        Ok(SimSource::Gaussian(from_value::<GaussianSimModel>(v, "Gaussian simulation model")?))
    } else {
        Ok(SimSource::Discrete(discrete_instance(v)?))
    }
}

pub fn qbt_sim(a: &QbtSimArgs) -> Result<String> {
    let source = sim_source(read_json(&a.input)?)?;
    let sizes = match &source {
        SimSource::Discrete(i) => i.pmfs().sensors.clone(),
        SimSource::Gaussian(m) => {
            m.validate()?;
            m.y_levels()
        }
    };
    let enc: EncoderSpec = match &a.encoders {
        Some(p) => from_value(read_json(p)?, "encoders")?,
        None => EncoderSpec::identity(&sizes),
    };
    let rates = match (&a.rates, &enc.binning) {
        (Some(r), _) => r.0.clone(),
        (None, Some(_)) => return Err(arg_error("--rates is required when the encoders bin")),
        // Without binning the rates never enter the simulation.
        (None, None) => vec![f64::INFINITY; sizes.len()],
    };
    let mut cfg = SimConfig::new(a.n, a.trials, a.eps, a.seed);
    cfg.typicality_constant = a.typicality_constant;
    to_json(&qbt_simulate(&source, &enc, &rates, &cfg)?)
}

#[derive(Args, Debug)]
pub struct NpOracleArgs {
    /// Either {p, q[, eps]} or a discrete instance; the latter gives a CSV curve over n = 1..--n.
    #[arg(long)]
    pub input: PathBuf,
    /// Type-I budget; overrides `eps` in the input.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest blocklength for the curve.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Symbolwise encoders (JSON); identity quantizers by default.
    #[arg(long)]
    pub encoders: Option<PathBuf>,
    /// Report rates and exponents in bits.
    #[arg(long)]
    pub bits: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn np_oracle(a: &NpOracleArgs) -> Result<String> {
    let v = read_json(&a.input)?;
    if v.get("x").is_some() {
        let inst = discrete_instance(v)?;
        let enc: EncoderSpec = match &a.encoders {
            Some(p) => from_value(read_json(p)?, "encoders")?,
            None => EncoderSpec::identity(&inst.pmfs().sensors),
        };
        let eps = a.eps.ok_or_else(|| arg_error("--eps is required for an exponent curve"))?;
        let ns: Vec<usize> = (1..=a.n).collect();
        let curve = empirical_exponent_curve(&inst, &enc, eps, &ns)?;
        let u = unit(a.bits);
        let mut csv = Csv::new(&["n".into(), "exponent_exact".into(), "ceiling".into()]);
        for p in &curve.points {
            csv.row(&[p.n.to_string(), fmt_num(p.exponent_exact / u), fmt_num(curve.ceiling / u)]);
        }
        return Ok(csv.into_string());
    }
    #[derive(Deserialize)]
    struct Raw {
        p: Vec<f64>,
        q: Vec<f64>,
        eps: Option<f64>,
    }
    let raw: Raw = from_value(v, "Neyman-Pearson instance")?;
    let eps = a.eps.or(raw.eps).ok_or_else(|| arg_error("no eps in the input and no --eps"))?;
    let sol = np_solve(&NpInstance::new(raw.p, raw.q, eps)?)?;
    #[derive(Serialize)]
    struct Out {
        schema_version: &'static str,
        eps: f64,
        beta: f64,
        beta_deterministic: f64,
        threshold_fraction: f64,
    }
    to_json(&Out {
        schema_version: SCHEMA_VERSION,
        eps,
        beta: sol.beta,
        beta_deterministic: sol.beta_deterministic,
        threshold_fraction: sol.threshold_fraction,
    })
}

#[derive(Args, Debug)]
pub struct EpBoundsArgs {
    /// Source density (JSON), e.g. {"kind": "wald", "mu": 1, "lambda": 10}; an ep-bounds report also works.
    #[arg(long)]
    pub input: PathBuf,
    /// Total observation noise variance σ_Z².
    #[arg(long)]
    pub sigma_z2: f64,
    /// Number of sensors for the sum-rate bounds.
    #[arg(long, default_value_t = 1)]
    pub k_max: usize,
    /// Exponents for the sum-rate bounds, start:stop:step.
    #[arg(long, value_parser = parse_grid)]
    pub e_grid: Option<Grid>,
    /// Rates for the single-sensor bounds.
    #[arg(long, value_parser = parse_list)]
    pub rates: Option<List>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn ep_bounds(a: &EpBoundsArgs) -> Result<String> {
    let density: DensitySpec = nested_or_whole(&a.input, "density", "density")?;
    density.validate()?;
    // κ is infinite for densities with jumps; the bounds that need it are then left out.
    let profile = match source_profile(&density) {
        Ok(p) => p,
        Err(e) if e.is_numerical() => source_powers(&density)?,
        Err(e) => return Err(e.into()),
    };
    let k = a.k_max;
    if k == 0 {
        return Err(arg_error("--k-max must be at least 1"));
    }
    #[derive(Serialize)]
    struct P2pRow {
        rate: f64,
        #[serde(flatten)]
        bounds: P2pBounds,
    }
    #[derive(Serialize)]
    struct SumRow {
        #[serde(rename = "E")]
        e: f64,
        #[serde(flatten)]
        bounds: SumRateBounds,
        rate_redundancy: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        limit: Option<GapLimitBound>,
    }
    #[derive(Serialize)]
    struct Out {
        schema_version: &'static str,
        density: DensitySpec,
        profile: SourceProfile,
        sigma_z2: f64,
        #[serde(rename = "K")]
        k: usize,
        p2p: Vec<P2pRow>,
        sum_rate: Vec<SumRow>,
        /// Exponents outside the domain of the sum-rate bounds.
        skipped: Vec<f64>,
    }
    let p2p = a
        .rates
        .iter()
        .flat_map(|l| &l.0)
        .map(|&r| Ok(P2pRow { rate: r, bounds: p2p_bounds(&density, a.sigma_z2, r)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut sum_rate = Vec::new();
    let mut skipped = Vec::new();
    if let Some(Grid(grid)) = &a.e_grid {
        let n_y = smoothed_entropy_power(&density, a.sigma_z2 / k as f64)?;
        for &e in grid {
            match sum_rate_bounds_from(&profile, n_y, a.sigma_z2, k, e) {
                Ok(bounds) => sum_rate.push(SumRow {
                    e,
                    bounds,
                    rate_redundancy: rate_redundancy_from(&profile, n_y, a.sigma_z2, k, e)?,
                    limit: gap_limit_bound_from(&profile, a.sigma_z2, e).ok(),
                }),
                Err(rateex_core::Error::ExponentOutOfDomain { .. }) => skipped.push(e),
                Err(e) => return Err(e.into()),
            }
        }
    }
    to_json(&Out {
        schema_version: SCHEMA_VERSION,
        density,
        profile,
        sigma_z2: a.sigma_z2,
        k,
        p2p,
        sum_rate,
        skipped,
    })
}

#[derive(Args, Debug)]
pub struct GapCurveArgs {
    /// Source density (JSON); an ep-bounds report also works.
    #[arg(long)]
    pub input: PathBuf,
    /// Total observation noise variance σ_Z².
    #[arg(long)]
    pub sigma_z2: f64,
    /// Largest sensor count.
    #[arg(long)]
    pub k_max: usize,
    /// Exponents, start:stop:step.
    #[arg(long, value_parser = parse_grid)]
    pub e_grid: Grid,
    /// Report rates and exponents in bits.
    #[arg(long)]
    pub bits: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// CSV of Δ(K, E) plus warnings for the caller to print.
pub fn gap_curve_csv(a: &GapCurveArgs) -> Result<(String, Vec<String>)> {
    let density: DensitySpec = nested_or_whole(&a.input, "density", "density")?;
    let curve = gap_curve(&density, a.sigma_z2, a.k_max, &a.e_grid.0)?;
    let u = unit(a.bits);
    let header = ["K", "E", "delta", "limit_bound_with_E", "limit_bound_uniform"].map(String::from);
    let mut csv = Csv::new(&header);
    for r in &curve.rows {
        csv.row(&[
            r.k.to_string(),
            fmt_num(r.e / u),
            fmt_num(r.delta / u),
            fmt_num(r.limit_bound_with_e / u),
            fmt_num(r.limit_bound_uniform / u),
        ]);
    }
    let mut warnings = Vec::new();
    if !curve.monotone_trend {
        warnings.push("delta is not monotone in K and E on this grid".to_string());
    }
    if curve.skipped > 0 {
        warnings.push(format!("{} (K, E) points lie outside the domain of the bounds and were skipped", curve.skipped));
    }
    Ok((csv.into_string(), warnings))
}
