use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FACTOR_TOL;

pub const DEFAULT_OUTCOME_LIMIT: u128 = 10_000_000;

/// Two pmfs on a common finite outcome set and a Type-I budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpInstance {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub eps: f64,
}

impl NpInstance {
    pub fn new(p: Vec<f64>, q: Vec<f64>, eps: f64) -> Result<Self> {
        let inst = Self { p, q, eps };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.q.len() {
            return Err(Error::DimensionMismatch(format!(
                "P has {} outcomes, Q has {}",
                self.p.len(),
                self.q.len()
            )));
        }
        if self.p.len() as u128 > DEFAULT_OUTCOME_LIMIT {
            return Err(Error::TooManyOutcomes { count: self.p.len() as u128, limit: DEFAULT_OUTCOME_LIMIT });
        }
        for (name, v) in [("P", &self.p), ("Q", &self.q)] {
            let sum: f64 = v.iter().sum();
            let tol = FACTOR_TOL * (v.len() as f64).max(1.0);
            if v.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > tol {
                return Err(Error::MassNotOne { which: name.into(), sum });
            }
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::InvalidInput(format!("eps = {} is outside [0, 1]", self.eps)));
        }
        Ok(())
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { p: self.p.clone(), q: self.q.clone(), eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpSolution {
    /// Minimal Type-II error over randomized tests with Type-I error ≤ ε.
    pub beta: f64,
    /// Best deterministic likelihood-ratio region (threshold atom accepted in full).
    pub beta_deterministic: f64,
    /// Fraction of the threshold atom accepted by the randomized test.
    pub threshold_fraction: f64,
}

/// Exact Neyman-Pearson optimum: outcomes sorted by P/Q (descending, Q = 0 first)
/// are rejected from the bottom until the rejected P-mass reaches ε, splitting the
/// threshold atom.
pub fn np_solve(inst: &NpInstance) -> Result<NpSolution> {
    inst.validate()?;
    let mut idx: Vec<usize> = (0..inst.p.len()).filter(|&i| inst.p[i] > 0.0).collect();
    // Likelihood ratio P/Q, infinite where Q vanishes. A keyed sort keeps the order total,
    // which cross-multiplied comparisons do not guarantee under rounding.
    let ratio = |i: usize| if inst.q[i] > 0.0 { inst.p[i] / inst.q[i] } else { f64::INFINITY };
    idx.sort_by(|&i, &j| ratio(j).total_cmp(&ratio(i)).then(i.cmp(&j)));
    if inst.eps >= 1.0 {
        return Ok(NpSolution { beta: 0.0, beta_deterministic: 0.0, threshold_fraction: 0.0 });
    }
    // The Type-I error is the P-mass of the rejected set, so reject from the least
    // likely end while that mass stays within ε. Measuring it directly (rather than
    // as one minus the accepted mass) keeps ε = 0 exact when the stored P-mass is a
    // few ulps off one.
    let mut rejected_p = Compensated::default();
    let mut cut = idx.len();
    let mut frac = 1.0;
    while cut > 0 {
        let p = inst.p[idx[cut - 1]];
        if rejected_p.value() + p <= inst.eps {
            rejected_p.add(p);
            cut -= 1;
        } else {
            frac = (1.0 - (inst.eps - rejected_p.value()) / p).clamp(0.0, 1.0);
            break;
        }
    }
    if cut == 0 {
        return Ok(NpSolution { beta: 0.0, beta_deterministic: 0.0, threshold_fraction: 0.0 });
    }
    let threshold = idx[cut - 1];
    let mut beta = Compensated::default();
    for &i in &idx[..cut - 1] {
        beta.add(inst.q[i]);
    }
    let q_thr = inst.q[threshold];
    // With no Q-mass left outside the region the error is exactly 1, whatever the
    // rounded total of Q says.
    let q_rejected = idx[cut..].iter().any(|&i| inst.q[i] > 0.0)
        || inst.p.iter().zip(&inst.q).any(|(&p, &q)| p == 0.0 && q > 0.0);
    let full = if q_rejected { (beta.value() + q_thr).min(1.0) } else { 1.0 };
    let split = if frac == 1.0 { full } else { (beta.value() + frac * q_thr).min(1.0) };
    Ok(NpSolution { beta: split, beta_deterministic: full, threshold_fraction: frac })
}

/// Neumaier summation, so long accumulations stay within an ulp or two of exact.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() { (self.sum - t) + x } else { (x - t) + self.sum };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Minimal Type-II error β(ε).
pub fn np_oracle(inst: &NpInstance) -> Result<f64> {
    Ok(np_solve(inst)?.beta)
}
