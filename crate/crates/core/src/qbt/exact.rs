use serde::{Deserialize, Serialize};

use super::np::{np_solve, NpInstance, DEFAULT_OUTCOME_LIMIT};
use crate::dm::tensor::{binary_entropy, kl_divergence, JointPmfTensor, Var};
use crate::error::{Error, Result};
use crate::model::discrete::{decode_tuple, DiscreteHTInstance, HtPmfs};
use crate::FACTOR_TOL;

/// Hashing of message blocks into bins, with bin counts ⌈e^{nR_k}⌉ from the rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub seed: u64,
}

/// Deterministic symbolwise quantizers Y_k → message symbols, applied letter by letter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    /// `quantizers[k][y]` is the message symbol sent for observation y.
    pub quantizers: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<BinningSpec>,
}

impl EncoderSpec {
    pub fn identity(sensor_sizes: &[usize]) -> Self {
        Self { quantizers: sensor_sizes.iter().map(|&n| (0..n).collect()).collect(), binning: None }
    }

    pub fn constant(sensor_sizes: &[usize]) -> Self {
        Self { quantizers: sensor_sizes.iter().map(|&n| vec![0; n]).collect(), binning: None }
    }

    /// Message alphabet size per sensor (largest symbol + 1).
    pub fn message_sizes(&self) -> Vec<usize> {
        self.quantizers.iter().map(|q| q.iter().max().map_or(0, |m| m + 1)).collect()
    }

    pub fn validate(&self, sensor_sizes: &[usize]) -> Result<()> {
        if self.quantizers.len() != sensor_sizes.len() {
            return Err(Error::AlphabetMismatch(format!(
                "{} quantizers for {} sensors",
                self.quantizers.len(),
                sensor_sizes.len()
            )));
        }
        for (k, (q, &n)) in self.quantizers.iter().zip(sensor_sizes).enumerate() {
            if q.len() != n {
                return Err(Error::AlphabetMismatch(format!(
                    "quantizer {} covers {} symbols, |Y_{}| = {n}",
                    k + 1,
                    q.len(),
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// Single-letter pushforward of a pmf over (X, Y0, Y1..YK) to (M1..MK, X, Y0),
/// laid out as `[m][x][y0]` with `m` the row-major message tuple.
pub(crate) fn letter_pushforward(pm: &HtPmfs, data: &[f64], enc: &EncoderSpec) -> Vec<f64> {
    let msizes = enc.message_sizes();
    let nm: usize = msizes.iter().product();
    let nxy0 = pm.x * pm.y0;
    let ny = pm.sensor_tuple_count();
    let mut out = vec![0.0; nm * nxy0];
    let mut sym = vec![0; pm.sensors.len()];
    for ab in 0..nxy0 {
        for c in 0..ny {
            decode_tuple(c, &pm.sensors, &mut sym);
            let m = sym.iter().enumerate().fold(0, |acc, (k, &y)| acc * msizes[k] + enc.quantizers[k][y]);
            out[m * nxy0 + ab] += data[ab * ny + c];
        }
    }
    out
}

/// Outcome space of the n-letter pushforward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockDims {
    pub m: usize,
    pub x: usize,
    pub y0: usize,
    pub n: usize,
}

impl BlockDims {
    fn letter(&self) -> usize {
        self.m * self.x * self.y0
    }
}

fn outcome_count(letter: usize, n: usize) -> u128 {
    (0..n).fold(1u128, |acc, _| acc.saturating_mul(letter as u128))
}

/// n-fold product of a single-letter pmf over `[m][x][y0]`, laid out as `[m^n][x^n][y0^n]`.
fn block_product(letter: &[f64], d: BlockDims) -> Vec<f64> {
    let (mn, xn, y0n) = (d.m.pow(d.n as u32), d.x.pow(d.n as u32), d.y0.pow(d.n as u32));
    let mut out = vec![0.0; mn * xn * y0n];
    let c = d.letter();
    let total = c.pow(d.n as u32);
    let mut digits = vec![0usize; d.n];
    for idx in 0..total {
        decode_tuple(idx, &vec![c; d.n], &mut digits);
        let (mut mi, mut xi, mut yi, mut p) = (0, 0, 0, 1.0);
        for &l in &digits {
            let (m, rest) = (l / (d.x * d.y0), l % (d.x * d.y0));
            let (x, y0) = (rest / d.y0, rest % d.y0);
            mi = mi * d.m + m;
            xi = xi * d.x + x;
            yi = yi * d.y0 + y0;
            p *= letter[l];
        }
        out[(mi * xn + xi) * y0n + yi] = p;
    }
    out
}

fn check_masses(pm: &HtPmfs) -> Result<()> {
    for (name, v) in [("P", &pm.p), ("Q", &pm.q)] {
        let sum: f64 = v.iter().sum();
        if v.len() != pm.shape().iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!("{name} has the wrong number of entries")));
        }
        if v.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > FACTOR_TOL * v.len() as f64 {
            return Err(Error::MassNotOne { which: name.into(), sum });
        }
    }
    Ok(())
}

pub(crate) struct BlockPair {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub dims: BlockDims,
}

pub(crate) fn block_pushforward(pm: &HtPmfs, enc: &EncoderSpec, n: usize) -> Result<BlockPair> {
    check_masses(pm)?;
    enc.validate(&pm.sensors)?;
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be at least 1".into()));
    }
    let dims = BlockDims { m: enc.message_sizes().iter().product(), x: pm.x, y0: pm.y0, n };
    let count = outcome_count(dims.letter(), n);
    if count > DEFAULT_OUTCOME_LIMIT {
        return Err(Error::TooManyOutcomes { count, limit: DEFAULT_OUTCOME_LIMIT });
    }
    let p1 = letter_pushforward(pm, &pm.p, enc);
    let q1 = letter_pushforward(pm, &pm.q, enc);
    Ok(BlockPair { p: block_product(&p1, dims), q: block_product(&q1, dims), dims })
}

/// Exact laws of (φ(Y_1^n)..φ(Y_K^n), X^n, Y_0^n) under both hypotheses.
pub fn build_np_instance(instance: &DiscreteHTInstance, encoders: &EncoderSpec, n: usize, eps: f64) -> Result<NpInstance> {
    let b = block_pushforward(instance.pmfs(), encoders, n)?;
    NpInstance::new(b.p, b.q, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    /// D(P_{M,X^n,Y_0^n} || Q_{M,X^n,Y_0^n})
    pub divergence: f64,
    /// I(M; X^n | Y_0^n) under P.
    pub information: f64,
    pub gap: f64,
}

fn divergence_from_block(b: &BlockPair) -> Result<DivergenceCheck> {
    let d = b.dims;
    let n = d.n as u32;
    let t = JointPmfTensor::from_parts(
        vec![(Var::Other(0), d.m.pow(n)), (Var::Other(1), d.x.pow(n)), (Var::Other(2), d.y0.pow(n))],
        b.p.clone(),
    )?;
    let information = t.conditional_mutual_information(&[Var::Other(0)], &[Var::Other(1)], &[Var::Other(2)])?;
    let divergence = kl_divergence(&b.p, &b.q);
    Ok(DivergenceCheck { divergence, information, gap: (divergence - information).abs() })
}

/// Both sides of D(P_M || Q_M) = I(M; X^n | Y_0^n) for a validated instance.
pub fn divergence_identity_check(instance: &DiscreteHTInstance, encoders: &EncoderSpec, n: usize) -> Result<DivergenceCheck> {
    divergence_from_block(&block_pushforward(instance.pmfs(), encoders, n)?)
}

/// Same computation for a (P, Q) pair whose marginals need not match; the identity
/// then generally fails.
pub fn divergence_identity_check_pmfs(pmfs: &HtPmfs, encoders: &EncoderSpec, n: usize) -> Result<DivergenceCheck> {
    divergence_from_block(&block_pushforward(pmfs, encoders, n)?)
}

/// exp(−(D + h₂(α))/α): lower bound on the Type-II error of any test whose
/// acceptance probability under H_0 is α.
pub fn log_sum_beta_bound(divergence: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::AlphaZero);
    }
    // Summed KL terms can land a few ulps below zero.
    if alpha > 1.0 || !(divergence >= -1e-12) {
        return Err(Error::InvalidInput(format!("need D >= 0 and alpha in (0, 1], got D = {divergence}, alpha = {alpha}")));
    }
    Ok((-(divergence.max(0.0) + binary_entropy(alpha)) / alpha).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub beta: f64,
    /// −(1/n) ln β
    pub exponent_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentCurve {
    pub schema_version: String,
    pub eps: f64,
    /// Single-letter I(φ(Y_1..Y_K); X | Y_0).
    pub ceiling: f64,
    pub points: Vec<CurvePoint>,
}

/// Exact NP exponents of a fixed symbolwise encoder for each blocklength in `ns`.
pub fn empirical_exponent_curve(
    instance: &DiscreteHTInstance,
    encoders: &EncoderSpec,
    eps: f64,
    ns: &[usize],
) -> Result<ExponentCurve> {
    let pm = instance.pmfs();
    encoders.validate(&pm.sensors)?;
    let m = encoders.message_sizes().iter().product();
    let letter = JointPmfTensor::from_parts(
        vec![(Var::M(1), m), (Var::X, pm.x), (Var::Y0, pm.y0)],
        letter_pushforward(pm, &pm.p, encoders),
    )?;
    let ceiling = letter.conditional_mutual_information(&[Var::M(1)], &[Var::X], &[Var::Y0])?;
    let points = ns
        .iter()
        .map(|&n| {
            let inst = build_np_instance(instance, encoders, n, eps)?;
            let beta = np_solve(&inst)?.beta;
            Ok(CurvePoint { n, beta, exponent_exact: -beta.ln() / n as f64 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExponentCurve { schema_version: crate::SCHEMA_VERSION.into(), eps, ceiling, points })
}
