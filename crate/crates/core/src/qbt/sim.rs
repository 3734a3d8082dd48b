use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::exact::{letter_pushforward, EncoderSpec};
use crate::error::{Error, Result};
use crate::model::discrete::{decode_tuple, DiscreteHTInstance};
use crate::model::subset::check_rates;
use crate::numeric::integrate_panels;

/// z-value of the two-sided 99% binomial confidence radius.
pub const CI_Z: f64 = 2.576;
pub const DEFAULT_TYPICALITY_CONSTANT: f64 = 0.5;
/// Upper limit on message blocks enumerated per trial by the binning decoder.
pub const BINNING_CANDIDATE_LIMIT: u128 = 1_000_000;

/// Scalar Gaussian sensors Y_k = X + N_k, observed through interval quantizers.
/// Under the alternative, (Y_1..Y_K) keep their law but are independent of X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSimModel {
    pub sigma_x2: f64,
    pub noise_vars: Vec<f64>,
    /// Increasing interior thresholds for the detector's view of X.
    pub x_thresholds: Vec<f64>,
    /// Increasing interior thresholds per sensor; the bin index is the encoder input.
    pub y_thresholds: Vec<Vec<f64>>,
}

fn increasing(t: &[f64]) -> bool {
    t.iter().all(|v| v.is_finite()) && t.windows(2).all(|w| w[0] < w[1])
}

fn bin_of(t: &[f64], v: f64) -> usize {
    t.partition_point(|&th| th <= v)
}

/// `levels − 1` thresholds splitting N(0, var) into equiprobable cells.
pub fn equiprobable_thresholds(var: f64, levels: usize) -> Vec<f64> {
    let n = Normal::new(0.0, var.sqrt()).expect("positive variance");
    (1..levels).map(|i| n.inverse_cdf(i as f64 / levels as f64)).collect()
}

impl GaussianSimModel {
    /// Equiprobable quantization of X and of each Y_k.
    pub fn equiprobable(sigma_x2: f64, noise_vars: &[f64], x_levels: usize, y_levels: usize) -> Result<Self> {
        let m = Self {
            sigma_x2,
            noise_vars: noise_vars.to_vec(),
            x_thresholds: equiprobable_thresholds(sigma_x2, x_levels.max(1)),
            y_thresholds: noise_vars.iter().map(|s| equiprobable_thresholds(sigma_x2 + s, y_levels.max(1))).collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x2 > 0.0 && self.sigma_x2.is_finite()) {
            return Err(Error::NotPositiveDefinite("sigma_x".into()));
        }
        if self.noise_vars.is_empty() || self.noise_vars.len() != self.y_thresholds.len() {
            return Err(Error::DimensionMismatch("one threshold list per sensor is required".into()));
        }
        for (k, &s) in self.noise_vars.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NotPositiveDefinite(format!("sigma_{}", k + 1)));
            }
        }
        if !increasing(&self.x_thresholds) || !self.y_thresholds.iter().all(|t| increasing(t)) {
            return Err(Error::InvalidInput("thresholds must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn x_levels(&self) -> usize {
        self.x_thresholds.len() + 1
    }

    pub fn y_levels(&self) -> Vec<usize> {
        self.y_thresholds.iter().map(|t| t.len() + 1).collect()
    }

    fn cell(t: &[f64], i: usize, span: f64) -> (f64, f64) {
        let lo = if i == 0 { -span } else { t[i - 1] };
        let hi = if i == t.len() { span } else { t[i] };
        (lo, hi)
    }

    /// P(X-bin = a, Y_k-bins = b) by quadrature over x, laid out `[a][b_1..b_K]`.
    fn cell_masses(&self) -> Result<Vec<f64>> {
        let sx = self.sigma_x2.sqrt();
        let span = 12.0 * sx;
        let ylev = self.y_levels();
        let ny: usize = ylev.iter().product();
        let nx = self.x_levels();
        let sd: Vec<f64> = self.noise_vars.iter().map(|v| v.sqrt()).collect();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let dens = |x: f64| (-0.5 * x * x / self.sigma_x2).exp() / (sx * (2.0 * std::f64::consts::PI).sqrt());
        let mut out = vec![0.0; nx * ny];
        let mut sym = vec![0; ylev.len()];
        for a in 0..nx {
            let (lo, hi) = Self::cell(&self.x_thresholds, a, span);
            let (lo, hi) = (lo.max(-span), hi.min(span));
            if lo >= hi {
                continue;
            }
            for c in 0..ny {
                decode_tuple(c, &ylev, &mut sym);
                let f = |x: f64| {
                    let mut p = dens(x);
                    for (k, &b) in sym.iter().enumerate() {
                        let (yl, yh) = Self::cell(&self.y_thresholds[k], b, f64::INFINITY);
                        p *= std_normal.cdf((yh - x) / sd[k]) - std_normal.cdf((yl - x) / sd[k]);
                    }
                    p
                };
                let panels = 1 + ((hi - lo) / (0.25 * sx)).ceil() as usize;
                out[a * ny + c] = integrate_panels(&f, lo, hi, panels, 1e-11)?;
            }
        }
        let total: f64 = out.iter().sum();
        for v in &mut out {
            *v /= total;
        }
        Ok(out)
    }

    /// The quantized model as a discrete instance (one sensor only: with several
    /// sensors the quantized observations are no longer conditionally independent).
    pub fn discretize(&self) -> Result<DiscreteHTInstance> {
        self.validate()?;
        if self.noise_vars.len() != 1 {
            return Err(Error::StructureUnsupported(
                "quantized multi-sensor Gaussian models violate the Markov structure".into(),
            ));
        }
        let cells = self.cell_masses()?;
        let (nx, ny) = (self.x_levels(), self.y_levels()[0]);
        let px: Vec<f64> = (0..nx).map(|a| cells[a * ny..(a + 1) * ny].iter().sum()).collect();
        let cond: Vec<f64> = (0..nx)
            .flat_map(|a| {
                let m = px[a];
                cells[a * ny..(a + 1) * ny].iter().map(move |&v| v / m).collect::<Vec<_>>()
            })
            .collect();
        DiscreteHTInstance::from_factors(nx, 1, &px, &[(ny, cond)])
    }
}

/// Where the simulated blocks come from.
#[derive(Debug, Clone)]
pub enum SimSource {
    Discrete(DiscreteHTInstance),
    Gaussian(GaussianSimModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub trials: u64,
    pub eps: f64,
    pub seed: u64,
    /// Typicality radius is `typicality_constant / sqrt(n)` in total variation.
    pub typicality_constant: f64,
}

impl SimConfig {
    pub fn new(n: usize, trials: u64, eps: f64, seed: u64) -> Self {
        Self { n, trials, eps, seed, typicality_constant: DEFAULT_TYPICALITY_CONSTANT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub schema_version: String,
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub eps: f64,
    pub typicality_radius: f64,
    /// Fraction of H_0 blocks rejected.
    pub alpha_hat: f64,
    /// Fraction of H_1 blocks accepted.
    pub beta_hat: f64,
    pub alpha_ci: f64,
    pub beta_ci: f64,
}

pub fn ci_radius(p: f64, trials: u64) -> f64 {
    CI_Z * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Per-letter sampler of (message tuple, x, y0) cells.
enum Sampler {
    Discrete {
        h0: WeightedIndex<f64>,
        h1: WeightedIndex<f64>,
        /// letter cell of each joint outcome (x, y0, y_1..y_K)
        cell: Vec<usize>,
    },
    Gaussian {
        model: GaussianSimModel,
        enc: EncoderSpec,
        msizes: Vec<usize>,
    },
}

impl Sampler {
    /// Per-sensor message symbols and the (x, y0) index of one letter.
    fn draw(&self, rng: &mut ChaCha8Rng, alt: bool, msg: &mut [usize], layout: &Layout) -> usize {
        match self {
            Sampler::Discrete { h0, h1, cell } => {
                let i = if alt { h1.sample(rng) } else { h0.sample(rng) };
                let c = cell[i];
                let (m, xy) = (c / layout.nxy0, c % layout.nxy0);
                decode_tuple(m, &layout.msizes, msg);
                xy
            }
            Sampler::Gaussian { model, enc, msizes } => {
                let sx = model.sigma_x2.sqrt();
                let x: f64 = sx * rng.sample::<f64, _>(StandardNormal);
                let xs = if alt { sx * rng.sample::<f64, _>(StandardNormal) } else { x };
                for k in 0..msizes.len() {
                    let y = xs + model.noise_vars[k].sqrt() * rng.sample::<f64, _>(StandardNormal);
                    msg[k] = enc.quantizers[k][bin_of(&model.y_thresholds[k], y)];
                }
                bin_of(&model.x_thresholds, x)
            }
        }
    }
}

struct Layout {
    msizes: Vec<usize>,
    nxy0: usize,
}

/// Hash used to assign message blocks to bins.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Binning {
    /// bin of every message block, per sensor
    bin_of: Vec<Vec<u64>>,
    /// message blocks in each bin, per sensor
    members: Vec<HashMap<u64, Vec<usize>>>,
}

impl Binning {
    fn new(spec_seed: u64, msizes: &[usize], n: usize, rates: &[f64]) -> Result<Self> {
        let mut bin_of = Vec::new();
        let mut members = Vec::new();
        for (k, &m) in msizes.iter().enumerate() {
            let blocks = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
            if blocks > BINNING_CANDIDATE_LIMIT {
                return Err(Error::TooManyOutcomes { count: blocks, limit: BINNING_CANDIDATE_LIMIT });
            }
            let bins = (n as f64 * rates[k]).exp().ceil().clamp(1.0, u64::MAX as f64) as u64;
            let key = mix(spec_seed ^ mix(k as u64 + 1));
            let b: Vec<u64> = (0..blocks as usize).map(|i| mix(key ^ i as u64) % bins).collect();
            let mut mem: HashMap<u64, Vec<usize>> = HashMap::new();
            for (i, &bin) in b.iter().enumerate() {
                mem.entry(bin).or_default().push(i);
            }
            bin_of.push(b);
            members.push(mem);
        }
        Ok(Self { bin_of, members })
    }
}

fn tv_distance(counts: &[u32], n: usize, target: &[f64]) -> f64 {
    0.5 * counts.iter().zip(target).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>()
}

/// Monte Carlo estimate of the error probabilities of a quantize(-bin)-test scheme.
///
/// Each block is encoded symbolwise; the detector accepts H_0 iff the joint type of
/// (messages, x^n, y_0^n) lies within `c/sqrt(n)` of the H_0 letter law in total
/// variation. With binning, the detector first picks, within the received bins,
/// the message blocks whose joint type is closest to the H_0 law. Trial `t` under
/// hypothesis `h` uses its own ChaCha stream `2t + h`, so the result does not depend
/// on scheduling.
pub fn qbt_simulate(source: &SimSource, encoders: &EncoderSpec, rates: &[f64], cfg: &SimConfig) -> Result<SimResult> {
    if cfg.trials == 0 {
        return Err(Error::TrialsZero);
    }
    if cfg.n == 0 {
        return Err(Error::InvalidInput("blocklength must be at least 1".into()));
    }
    check_rates(rates)?;
    if !(0.0..=1.0).contains(&cfg.eps) || !(cfg.typicality_constant >= 0.0) {
        return Err(Error::InvalidInput("eps must lie in [0, 1] and the typicality constant be >= 0".into()));
    }
    let (sampler, letter, layout) = match source {
        SimSource::Discrete(inst) => {
            let pm = inst.pmfs();
            encoders.validate(&pm.sensors)?;
            let msizes = encoders.message_sizes();
            let letter = letter_pushforward(pm, &pm.p, encoders);
            let nxy0 = pm.x * pm.y0;
            let ny = pm.sensor_tuple_count();
            let mut sym = vec![0; pm.sensors.len()];
            let cell: Vec<usize> = (0..pm.p.len())
                .map(|i| {
                    let (ab, c) = (i / ny, i % ny);
                    decode_tuple(c, &pm.sensors, &mut sym);
                    let m = sym.iter().enumerate().fold(0, |acc, (k, &y)| acc * msizes[k] + encoders.quantizers[k][y]);
                    m * nxy0 + ab
                })
                .collect();
            let w = |v: &[f64]| WeightedIndex::new(v.to_vec()).map_err(|e| Error::InvalidInput(e.to_string()));
            let s = Sampler::Discrete { h0: w(&pm.p)?, h1: w(&pm.q)?, cell };
            (s, letter, Layout { msizes, nxy0 })
        }
        SimSource::Gaussian(model) => {
            model.validate()?;
            encoders.validate(&model.y_levels())?;
            let msizes = encoders.message_sizes();
            let cells = model.cell_masses()?;
            let nx = model.x_levels();
            let ylev = model.y_levels();
            let ny: usize = ylev.iter().product();
            let nm: usize = msizes.iter().product();
            let mut letter = vec![0.0; nm * nx];
            let mut sym = vec![0; ylev.len()];
            for a in 0..nx {
                for c in 0..ny {
                    decode_tuple(c, &ylev, &mut sym);
                    let m = sym.iter().enumerate().fold(0, |acc, (k, &y)| acc * msizes[k] + encoders.quantizers[k][y]);
                    letter[m * nx + a] += cells[a * ny + c];
                }
            }
            let s = Sampler::Gaussian { model: model.clone(), enc: encoders.clone(), msizes: msizes.clone() };
            (s, letter, Layout { msizes, nxy0: nx })
        }
    };
    if rates.len() != layout.msizes.len() {
        return Err(Error::InvalidRates(format!("{} rates for {} sensors", rates.len(), layout.msizes.len())));
    }
    let binning = match &encoders.binning {
        Some(b) => Some(Binning::new(b.seed, &layout.msizes, cfg.n, rates)?),
        None => None,
    };
    let radius = cfg.typicality_constant / (cfg.n as f64).sqrt();
    let k = layout.msizes.len();
    let ncell = letter.len();

    let accept = |trial: u64, alt: bool| -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2 * trial + alt as u64);
        let mut msgs = vec![vec![0usize; cfg.n]; k];
        let mut xy = vec![0usize; cfg.n];
        let mut m = vec![0usize; k];
        for t in 0..cfg.n {
            xy[t] = sampler.draw(&mut rng, alt, &mut m, &layout);
            for j in 0..k {
                msgs[j][t] = m[j];
            }
        }
        let mut counts = vec![0u32; ncell];
        let type_of = |msgs: &[Vec<usize>], counts: &mut [u32]| {
            counts.iter_mut().for_each(|c| *c = 0);
            for t in 0..cfg.n {
                let mi = (0..k).fold(0, |acc, j| acc * layout.msizes[j] + msgs[j][t]);
                counts[mi * layout.nxy0 + xy[t]] += 1;
            }
        };
        match &binning {
            None => {
                type_of(&msgs, &mut counts);
                tv_distance(&counts, cfg.n, &letter) <= radius
            }
            Some(b) => {
                // Candidate blocks per sensor: everything sharing the received bin.
                let cands: Vec<&Vec<usize>> = (0..k)
                    .map(|j| {
                        let block = msgs[j].iter().fold(0, |acc, &s| acc * layout.msizes[j] + s);
                        &b.members[j][&b.bin_of[j][block]]
                    })
                    .collect();
                let sizes: Vec<usize> = cands.iter().map(|c| c.len()).collect();
                let total: usize = sizes.iter().product();
                let mut pick = vec![0; k];
                let mut trial_msgs = vec![vec![0usize; cfg.n]; k];
                let mut best = f64::INFINITY;
                for idx in 0..total.min(BINNING_CANDIDATE_LIMIT as usize) {
                    decode_tuple(idx, &sizes, &mut pick);
                    for j in 0..k {
                        let mut blk = cands[j][pick[j]];
                        for t in (0..cfg.n).rev() {
                            trial_msgs[j][t] = blk % layout.msizes[j];
                            blk /= layout.msizes[j];
                        }
                    }
                    type_of(&trial_msgs, &mut counts);
                    best = best.min(tv_distance(&counts, cfg.n, &letter));
                }
                best <= radius
            }
        }
    };

    let rejected_h0: u64 = (0..cfg.trials).into_par_iter().map(|t| u64::from(!accept(t, false))).sum();
    let accepted_h1: u64 = (0..cfg.trials).into_par_iter().map(|t| u64::from(accept(t, true))).sum();
    let alpha_hat = rejected_h0 as f64 / cfg.trials as f64;
    let beta_hat = accepted_h1 as f64 / cfg.trials as f64;
    Ok(SimResult {
        schema_version: crate::SCHEMA_VERSION.into(),
        n: cfg.n,
        trials: cfg.trials,
        seed: cfg.seed,
        eps: cfg.eps,
        typicality_radius: radius,
        alpha_hat,
        beta_hat,
        alpha_ci: ci_radius(alpha_hat, cfg.trials),
        beta_ci: ci_radius(beta_hat, cfg.trials),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qbt::exact::BinningSpec;

    #[test]
    fn trials_zero_rejected() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let r = qbt_simulate(&SimSource::Discrete(inst), &EncoderSpec::identity(&[2]), &[1.0], &SimConfig::new(4, 0, 0.1, 1));
        assert_eq!(r.unwrap_err(), Error::TrialsZero);
    }

    #[test]
    fn bad_rates_rejected() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let r = qbt_simulate(&SimSource::Discrete(inst), &EncoderSpec::identity(&[2]), &[-1.0], &SimConfig::new(4, 10, 0.1, 1));
        assert!(matches!(r, Err(Error::InvalidRates(_))));
    }

    #[test]
    fn reproducible() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let run = || {
            qbt_simulate(&SimSource::Discrete(inst.clone()), &EncoderSpec::identity(&[2]), &[1.0], &SimConfig::new(6, 2000, 0.1, 7))
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gaussian_discretization_is_normalized() {
        let m = GaussianSimModel::equiprobable(1.0, &[1.0], 4, 4).unwrap();
        let inst = m.discretize().unwrap();
        // Equiprobable X cells.
        for &p in inst.p_xy0() {
            assert!((p - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn binning_with_many_bins_behaves_like_plain_quantizer() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let enc = EncoderSpec { quantizers: vec![vec![0, 1]], binning: Some(BinningSpec { seed: 3 }) };
        let r = qbt_simulate(&SimSource::Discrete(inst), &enc, &[20.0], &SimConfig::new(4, 500, 0.1, 5)).unwrap();
        assert!(r.alpha_hat <= 1.0 && r.beta_hat <= 1.0);
    }
}
