use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::gaussian::{Convention, GaussianNetworkModel, OmegaSet};
use crate::model::linalg::{self, Mat};
use crate::model::subset::{check_rates, SubsetMask};

fn require_complex(model: &GaussianNetworkModel) -> Result<()> {
    match model.convention() {
        Convention::Complex => Ok(()),
        c => Err(Error::ConventionMismatch { expected: "complex", found: c.name() }),
    }
}

fn check_rate_len(model: &GaussianNetworkModel, rates: &[f64]) -> Result<()> {
    check_rates(rates)?;
    if rates.len() != model.num_sensors() {
        return Err(Error::InvalidRates(format!(
            "{} rates for {} sensors",
            rates.len(),
            model.num_sensors()
        )));
    }
    Ok(())
}

fn check_subset(model: &GaussianNetworkModel, subset: SubsetMask) -> Result<()> {
    if subset.num_sensors() != model.num_sensors() {
        return Err(Error::InvalidInput(format!(
            "subset over {} sensors, model has {}",
            subset.num_sensors(),
            model.num_sensors()
        )));
    }
    Ok(())
}

/// Σ_{n_S̄}⁻¹ (I − Λ_S̄ Σ_{n_S̄}⁻¹), the effective precision of the noise seen
/// through (Y_0, U_{S^c}).
pub(crate) fn effective_precision(model: &GaussianNetworkModel, omegas: &[Mat], subset: SubsetMask) -> Mat {
    let sc = subset.complement_members();
    let idx = model.rows_for(&sc);
    let noise = linalg::principal(model.noise_covariance(), &idx);
    let inv = linalg::inverse_spd(&noise).expect("noise covariance validated positive definite");
    let mut lambda = Mat::zeros(idx.len(), idx.len());
    let mut r = model.n_0();
    for &k in &sc {
        let s = &model.sensor(k).sigma_k;
        let n = s.nrows();
        let block = s - s * &omegas[k] * s;
        lambda.view_mut((r, r), (n, n)).copy_from(&block);
        r += n;
    }
    linalg::symmetrize(&(&inv - &inv * lambda * &inv))
}

/// J = Σ_x⁻¹ + H_S̄ᵀ Σ_{n_S̄}⁻¹ (I − Λ_S̄ Σ_{n_S̄}⁻¹) H_S̄.
pub fn fisher_closed_form(model: &GaussianNetworkModel, omegas: &OmegaSet, subset: SubsetMask) -> Result<Mat> {
    check_subset(model, subset)?;
    let om = omegas.matrices(model)?;
    Ok(fisher_from_matrices(model, &om, subset))
}

pub(crate) fn fisher_from_matrices(model: &GaussianNetworkModel, om: &[Mat], subset: SubsetMask) -> Mat {
    let h = model.stacked_channel(&subset.complement_members());
    let m = effective_precision(model, om, subset);
    let sx_inv = linalg::inverse_spd(model.sigma_x()).expect("sigma_x validated");
    linalg::symmetrize(&(sx_inv + h.transpose() * m * h))
}

/// log|I − Ω Σ|, or −inf when Ω reaches Σ⁻¹ in some direction.
pub(crate) fn log_det_i_minus(omega: &Mat, sigma: &Mat) -> f64 {
    let l = linalg::symmetrize(sigma).cholesky().expect("sigma_k validated").l();
    let inner = linalg::symmetrize(&(l.transpose() * omega * &l));
    SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&a| if a < 1.0 { (1.0 - a).ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// log|I + Σ_x H_0ᵀ Σ_0⁻¹ H_0|, the side-information term (0 when n_0 = 0).
pub(crate) fn side_information_term(model: &GaussianNetworkModel) -> f64 {
    if model.n_0() == 0 {
        return 0.0;
    }
    let inv = linalg::inverse_spd(model.sigma_0()).expect("sigma_0 validated");
    let a = model.h0().transpose() * inv * model.h0();
    linalg::logdet_i_plus_spd_product(model.sigma_x(), &a).expect("sigma_x validated")
}

pub(crate) fn vg_bound_from_matrices(
    model: &GaussianNetworkModel,
    om: &[Mat],
    rates: &[f64],
    subset: SubsetMask,
) -> f64 {
    let mut acc = 0.0;
    for k in subset.members() {
        acc += rates[k] + log_det_i_minus(&om[k], &model.sensor(k).sigma_k);
    }
    let h = model.stacked_channel(&subset.complement_members());
    let m = effective_precision(model, om, subset);
    let a = h.transpose() * m * h;
    let third = linalg::logdet_i_plus_spd_product(model.sigma_x(), &a).expect("sigma_x validated");
    acc - side_information_term(model) + third
}

/// Right-hand side of the subset-S exponent constraint for fixed Ω.
pub fn evaluate_vg_bound(
    model: &GaussianNetworkModel,
    omegas: &OmegaSet,
    rates: &[f64],
    subset: SubsetMask,
) -> Result<f64> {
    require_complex(model)?;
    check_rate_len(model, rates)?;
    check_subset(model, subset)?;
    let om = omegas.matrices(model)?;
    Ok(vg_bound_from_matrices(model, &om, rates, subset))
}

/// Per-subset bounds at a fixed parameter, with the achieved exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VgBoundReport {
    pub schema_version: String,
    pub per_subset: BTreeMap<SubsetMask, f64>,
    pub binding: Vec<SubsetMask>,
    /// min over subsets, clamped at 0.
    pub exponent: f64,
    pub omegas: OmegaSet,
}

pub(crate) fn report_from_values(values: Vec<(SubsetMask, f64)>, omegas: OmegaSet) -> VgBoundReport {
    let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + min.abs());
    let binding = values.iter().filter(|v| v.1 <= min + tol).map(|v| v.0).collect();
    VgBoundReport {
        schema_version: crate::SCHEMA_VERSION.into(),
        per_subset: values.into_iter().collect(),
        binding,
        exponent: min.max(0.0),
        omegas,
    }
}

pub fn vg_report(model: &GaussianNetworkModel, omegas: &OmegaSet, rates: &[f64]) -> Result<VgBoundReport> {
    require_complex(model)?;
    check_rate_len(model, rates)?;
    let om = omegas.matrices(model)?;
    let values = SubsetMask::all(model.num_sensors())
        .map(|s| (s, vg_bound_from_matrices(model, &om, rates, s)))
        .collect();
    Ok(report_from_values(values, omegas.clone()))
}

/// Covariance of the compression noise V_k in the Gaussian test channel U_k = Y_k + V_k.
#[derive(Debug, Clone, PartialEq)]
pub enum TestChannelNoise {
    Finite(Mat),
    /// Ω_k = 0: the channel output carries no information.
    Uninformative,
}

/// Γ_k = [(Σ_k − Σ_k Ω_k Σ_k)⁻¹ − Σ_k⁻¹]⁻¹.
///
/// This is the symmetric form of [(I − Ω_kΣ_k)⁻¹ − I]⁻¹ Σ_k; the two coincide
/// whenever Ω_k and Σ_k commute (scalar and diagonal models).
pub fn qbt_test_channel_covariance(model: &GaussianNetworkModel, omegas: &OmegaSet) -> Result<Vec<TestChannelNoise>> {
    let om = omegas.matrices(model)?;
    om.iter()
        .enumerate()
        .map(|(k, o)| {
            let sigma = &model.sensor(k).sigma_k;
            // With Σ = S², A = S Ω S has eigenvalues a in [0, 1] and Γ = S (I − A) A⁻¹ S.
            let eig = SymmetricEigen::new(linalg::symmetrize(sigma));
            let sqrt = &eig.eigenvectors
                * Mat::from_diagonal(&eig.eigenvalues.map(|v| v.sqrt()))
                * eig.eigenvectors.transpose();
            let a = SymmetricEigen::new(linalg::symmetrize(&(&sqrt * o * &sqrt)));
            let tol = 1e-12;
            let zero = a.eigenvalues.iter().filter(|&&v| v <= tol).count();
            if zero == a.eigenvalues.len() {
                return Ok(TestChannelNoise::Uninformative);
            }
            if zero > 0 {
                return Err(Error::OmegaOnBoundary { sensor: k + 1 });
            }
            let d = a.eigenvalues.map(|v| (1.0 - v.min(1.0)) / v);
            let inner = &a.eigenvectors * Mat::from_diagonal(&d) * a.eigenvectors.transpose();
            Ok(TestChannelNoise::Finite(linalg::symmetrize(&(&sqrt * inner * &sqrt))))
        })
        .collect()
}

/// Box parameters γ_k ∈ [0, 1/σ_k²] of the scalar region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaVector(pub Vec<f64>);

impl GammaVector {
    pub fn validate(&self, noise_vars: &[f64]) -> Result<()> {
        if self.0.len() != noise_vars.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gammas for {} sensors",
                self.0.len(),
                noise_vars.len()
            )));
        }
        for (i, (&g, &s)) in self.0.iter().zip(noise_vars).enumerate() {
            let upper = 1.0 / s;
            if !(g >= 0.0 && g <= upper * (1.0 + 1e-12)) {
                return Err(Error::GammaOutOfBox { index: i + 1, value: g, upper });
            }
        }
        Ok(())
    }
}

pub(crate) fn check_scalar_inputs(sigma_x2: f64, noise_vars: &[f64], rates: &[f64]) -> Result<()> {
    if !(sigma_x2 > 0.0 && sigma_x2.is_finite()) {
        return Err(Error::NotPositiveDefinite("sigma_x".into()));
    }
    for (k, &s) in noise_vars.iter().enumerate() {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!("sigma_{}", k + 1)));
        }
    }
    if noise_vars.is_empty() {
        return Err(Error::DimensionMismatch("no sensors".into()));
    }
    check_rates(rates)?;
    if rates.len() != noise_vars.len() {
        return Err(Error::InvalidRates(format!("{} rates for {} sensors", rates.len(), noise_vars.len())));
    }
    Ok(())
}

/// Σ_{k∈S} R_k + ln(1 + σ_X² Σ_{k∈S^c} γ_k) + Σ_{k∈S} ln(1 − γ_k σ_k²).
pub fn evaluate_scalar_bound(
    sigma_x2: f64,
    noise_vars: &[f64],
    gammas: &GammaVector,
    rates: &[f64],
    subset: SubsetMask,
) -> Result<f64> {
    check_scalar_inputs(sigma_x2, noise_vars, rates)?;
    gammas.validate(noise_vars)?;
    if subset.num_sensors() != noise_vars.len() {
        return Err(Error::InvalidInput("subset size does not match K".into()));
    }
    Ok(scalar_bound_unchecked(sigma_x2, noise_vars, &gammas.0, rates, subset))
}

pub(crate) fn scalar_bound_unchecked(
    sigma_x2: f64,
    noise_vars: &[f64],
    gammas: &[f64],
    rates: &[f64],
    subset: SubsetMask,
) -> f64 {
    let mut acc = 0.0;
    let mut sc = 0.0;
    for k in 0..noise_vars.len() {
        if subset.contains(k) {
            let arg = 1.0 - gammas[k] * noise_vars[k];
            acc += rates[k] + if arg > 0.0 { arg.ln() } else { f64::NEG_INFINITY };
        } else {
            sc += gammas[k];
        }
    }
    acc + (1.0 + sigma_x2 * sc).ln()
}
