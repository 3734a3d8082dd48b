use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::bound::{
    check_scalar_inputs, report_from_values, scalar_bound_unchecked, side_information_term, vg_report,
    GammaVector, VgBoundReport,
};
use super::maxmin::{self, ConcavePieces, Piece};
use crate::error::{Error, Result};
use crate::model::gaussian::{Convention, GaussianNetworkModel, GaussianSensor, OmegaSet};
use crate::model::linalg::{self, Mat};
use crate::model::subset::{check_rates, SubsetMask};

/// Largest K for which all 2^K subset constraints are enumerated.
pub const MAX_OPTIMIZED_SENSORS: usize = 12;

/// Scalar region: one piece per subset, variables γ_k ∈ [0, 1/σ_k²].
struct ScalarPieces {
    sigma_x2: f64,
    noise_vars: Vec<f64>,
    rates: Vec<f64>,
    subsets: Vec<SubsetMask>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ConcavePieces for ScalarPieces {
    fn dim(&self) -> usize {
        self.noise_vars.len()
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn eval(&self, g: &[f64]) -> Vec<Piece> {
        let k = self.dim();
        self.subsets
            .iter()
            .map(|&s| {
                let value = scalar_bound_unchecked(self.sigma_x2, &self.noise_vars, g, &self.rates, s);
                let sc: f64 = s.complement_members().iter().map(|&i| g[i]).sum();
                let denom = 1.0 + self.sigma_x2 * sc;
                let mut grad = DVector::zeros(k);
                let mut hess = DMatrix::zeros(k, k);
                let c = self.sigma_x2 / denom;
                for i in 0..k {
                    if s.contains(i) {
                        let a = 1.0 - g[i] * self.noise_vars[i];
                        grad[i] = -self.noise_vars[i] / a;
                        hess[(i, i)] = -(self.noise_vars[i] / a).powi(2);
                    } else {
                        grad[i] = c;
                        for j in 0..k {
                            if !s.contains(j) {
                                hess[(i, j)] = -c * c;
                            }
                        }
                    }
                }
                Piece { value, grad, hess }
            })
            .collect()
    }
}

/// Subsets whose constraint can bind: those with an infinite rate are vacuous.
fn finite_subsets(rates: &[f64]) -> Vec<SubsetMask> {
    SubsetMask::all(rates.len())
        .filter(|s| s.members().iter().all(|&k| rates[k].is_finite()))
        .collect()
}

fn check_k(k: usize) -> Result<()> {
    if k > MAX_OPTIMIZED_SENSORS {
        return Err(Error::InvalidInput(format!(
            "{k} sensors exceeds the optimizer limit of {MAX_OPTIMIZED_SENSORS}"
        )));
    }
    Ok(())
}

/// Maximizes the min over subsets of the scalar bound. Returns E* clamped at 0 and the maximizing γ.
pub fn optimize_scalar_exponent(sigma_x2: f64, noise_vars: &[f64], rates: &[f64]) -> Result<(f64, GammaVector)> {
    check_scalar_inputs(sigma_x2, noise_vars, rates)?;
    check_k(noise_vars.len())?;
    // With every rate zero, E ≤ 0 is forced and γ = 0 attains it.
    if rates.iter().all(|&r| r == 0.0) {
        return Ok((0.0, GammaVector(vec![0.0; noise_vars.len()])));
    }
    let p = ScalarPieces {
        sigma_x2,
        noise_vars: noise_vars.to_vec(),
        rates: rates.to_vec(),
        subsets: finite_subsets(rates),
        lower: vec![0.0; noise_vars.len()],
        upper: noise_vars.iter().map(|s| 1.0 / s).collect(),
    };
    let sol = maxmin::solve(&p, None);
    let gamma: Vec<f64> = sol.x.iter().zip(&p.upper).map(|(&g, &u)| g.clamp(0.0, u)).collect();
    let value = p
        .subsets
        .iter()
        .map(|&s| scalar_bound_unchecked(sigma_x2, noise_vars, &gamma, rates, s))
        .fold(f64::INFINITY, f64::min);
    Ok((value.max(0.0), GammaVector(gamma)))
}

/// Centralized ceiling ln(1 + σ_X² Σ_k 1/σ_k²) of the scalar region.
pub fn scalar_centralized_exponent(sigma_x2: f64, noise_vars: &[f64]) -> f64 {
    (1.0 + sigma_x2 * noise_vars.iter().map(|s| 1.0 / s).sum::<f64>()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaStructure {
    /// Ω_k = diag(ω_k), optimized; every Σ_k must be diagonal.
    Diagonal,
    /// Evaluate the supplied Ω only.
    GivenOmegas,
}

/// Per-subset data for the diagonal parametrization.
struct SubsetTerms {
    mask: SubsetMask,
    /// Σ_{k∈S} R_k − side-information term + log|Σ_x|.
    offset: f64,
    /// Variables of sensors in S with their noise variances: contribute ln(1 − ω σ).
    own: Vec<(usize, f64)>,
    /// Σ_x⁻¹ + H_S̄ᵀ Σ_{n_S̄}⁻¹ H_S̄.
    j0: Mat,
    /// (variable, σ, b = σ H_S̄ᵀ Σ_{n_S̄}⁻¹ e) for variables of sensors in S^c.
    directions: Vec<(usize, f64, DVector<f64>)>,
}

struct DiagonalPieces {
    terms: Vec<SubsetTerms>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DiagonalPieces {
    fn new(model: &GaussianNetworkModel, rates: &[f64]) -> Self {
        // Variable index of (sensor k, coordinate i) and its variance σ_ki.
        let mut var_of = Vec::new();
        let mut sig = Vec::new();
        for s in model.sensors() {
            let base = sig.len();
            var_of.push(base);
            sig.extend(s.sigma_k.diagonal().iter().cloned());
        }
        let side = side_information_term(model);
        let logdet_sx = linalg::logdet_spd(model.sigma_x()).expect("sigma_x validated");
        let sx_inv = linalg::inverse_spd(model.sigma_x()).expect("sigma_x validated");
        let terms = finite_subsets(rates)
            .into_iter()
            .map(|mask| {
                let sc = mask.complement_members();
                let h = model.stacked_channel(&sc);
                let noise = linalg::principal(model.noise_covariance(), &model.rows_for(&sc));
                let ninv = linalg::inverse_spd(&noise).expect("noise validated");
                let d = &ninv * &h; // row r is dᵀ for observation row r
                let j0 = linalg::symmetrize(&(&sx_inv + h.transpose() * &d));
                let mut directions = Vec::new();
                let mut row = model.n_0();
                for &k in &sc {
                    for i in 0..model.sensor(k).sigma_k.nrows() {
                        let v = var_of[k] + i;
                        let b = d.row(row).transpose() * sig[v];
                        directions.push((v, sig[v], b));
                        row += 1;
                    }
                }
                let mut own = Vec::new();
                let mut offset = logdet_sx - side;
                for k in mask.members() {
                    offset += rates[k];
                    for i in 0..model.sensor(k).sigma_k.nrows() {
                        own.push((var_of[k] + i, sig[var_of[k] + i]));
                    }
                }
                SubsetTerms { mask, offset, own, j0, directions }
            })
            .collect();
        Self { terms, lower: vec![0.0; sig.len()], upper: sig.iter().map(|s| 1.0 / s).collect() }
    }

    fn fisher(t: &SubsetTerms, w: &[f64]) -> Mat {
        let mut j = t.j0.clone();
        for (v, s, b) in &t.directions {
            // Λ entry σ − σ²ω; b already carries one factor σ.
            let c = (1.0 - s * w[*v]) / s;
            j -= b * b.transpose() * c;
        }
        linalg::symmetrize(&j)
    }
}

impl ConcavePieces for DiagonalPieces {
    fn dim(&self) -> usize {
        self.lower.len()
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn eval(&self, w: &[f64]) -> Vec<Piece> {
        let n = self.dim();
        self.terms
            .iter()
            .map(|t| {
                let mut grad = DVector::zeros(n);
                let mut hess = DMatrix::zeros(n, n);
                let mut value = t.offset;
                for &(v, s) in &t.own {
                    let a = 1.0 - w[v] * s;
                    value += if a > 0.0 { a.ln() } else { f64::NEG_INFINITY };
                    grad[v] = -s / a;
                    hess[(v, v)] = -(s / a).powi(2);
                }
                let j = Self::fisher(t, w);
                match j.clone().cholesky() {
                    Some(ch) => {
                        value += 2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
                        let jinv_b: Vec<DVector<f64>> = t.directions.iter().map(|(_, _, b)| ch.solve(b)).collect();
                        for (a, (va, _, ba)) in t.directions.iter().enumerate() {
                            grad[*va] = ba.dot(&jinv_b[a]);
                            for (c, (vc, _, _)) in t.directions.iter().enumerate() {
                                hess[(*va, *vc)] = -ba.dot(&jinv_b[c]).powi(2);
                            }
                        }
                    }
                    None => value = f64::NEG_INFINITY,
                }
                Piece { value, grad, hess }
            })
            .collect()
    }
}

fn require_complex(model: &GaussianNetworkModel) -> Result<()> {
    match model.convention() {
        Convention::Complex => Ok(()),
        c => Err(Error::ConventionMismatch { expected: "complex", found: c.name() }),
    }
}

fn optimize_diagonal(model: &GaussianNetworkModel, rates: &[f64]) -> Result<VgBoundReport> {
    let p = DiagonalPieces::new(model, rates);
    let w = if rates.iter().all(|&r| r == 0.0) {
        vec![0.0; p.dim()]
    } else {
        let sol = maxmin::solve(&p, None);
        sol.x.iter().zip(&p.upper).map(|(&x, &u)| x.clamp(0.0, u)).collect()
    };
    let mut omegas = Vec::with_capacity(model.num_sensors());
    let mut v = 0;
    for s in model.sensors() {
        let n = s.sigma_k.nrows();
        omegas.push(Mat::from_diagonal(&DVector::from_column_slice(&w[v..v + n])));
        v += n;
    }
    let values: Vec<(SubsetMask, f64)> = SubsetMask::all(model.num_sensors())
        .map(|s| (s, super::bound::vg_bound_from_matrices(model, &omegas, rates, s)))
        .collect();
    let mut report = report_from_values(values, OmegaSet::from_matrices(&omegas));
    // Subsets with an infinite rate never bind.
    report.binding.retain(|s| p.terms.iter().any(|t| t.mask == *s));
    Ok(report)
}

/// Optimizes (diagonal mode) or evaluates (given-omegas mode) the Gaussian region at `rates`.
pub fn optimize_vg_exponent(
    model: &GaussianNetworkModel,
    rates: &[f64],
    structure: OmegaStructure,
    omegas: Option<&OmegaSet>,
) -> Result<VgBoundReport> {
    require_complex(model)?;
    check_rates(rates)?;
    if rates.len() != model.num_sensors() {
        return Err(Error::InvalidRates(format!("{} rates for {} sensors", rates.len(), model.num_sensors())));
    }
    match structure {
        OmegaStructure::GivenOmegas => {
            let om = omegas.ok_or_else(|| Error::InvalidInput("given-omegas mode needs an OmegaSet".into()))?;
            vg_report(model, om, rates)
        }
        OmegaStructure::Diagonal => {
            check_k(model.num_sensors())?;
            if let Some(k) = model.sensors().iter().position(|s| !linalg::is_diagonal(&s.sigma_k)) {
                return Err(Error::StructureUnsupported(format!(
                    "diagonal mode needs diagonal sigma_k; sensor {} is not",
                    k + 1
                )));
            }
            optimize_diagonal(model, rates)
        }
    }
}

/// Optimal exponent with a single encoder at rate `r1`.
///
/// Ω_1 is optimized over matrices diagonal in the eigenbasis of Σ_1 (plain diagonal when Σ_1 is).
pub fn one_encoder_region(model: &GaussianNetworkModel, r1: f64) -> Result<VgBoundReport> {
    if model.num_sensors() != 1 {
        return Err(Error::KNotOne(model.num_sensors()));
    }
    require_complex(model)?;
    check_rates(&[r1])?;
    let s = model.sensor(0);
    if linalg::is_diagonal(&s.sigma_k) {
        return optimize_diagonal(model, &[r1]);
    }
    // Y_1 → Uᵀ Y_1 diagonalizes Σ_1 and leaves the region unchanged; Ω maps back as U Ω' Uᵀ.
    let eig = SymmetricEigen::new(linalg::symmetrize(&s.sigma_k));
    let u = eig.eigenvectors.clone();
    let rotated = GaussianSensor {
        h: u.transpose() * &s.h,
        sigma_k0: u.transpose() * &s.sigma_k0,
        sigma_k: Mat::from_diagonal(&eig.eigenvalues),
    };
    let m2 = GaussianNetworkModel::from_blocks(
        model.convention(),
        model.sigma_x().clone(),
        model.h0().clone(),
        model.sigma_0().clone(),
        vec![rotated],
    )?;
    let r = optimize_diagonal(&m2, &[r1])?;
    let om = r.omegas.matrices(&m2)?;
    let back = linalg::symmetrize(&(&u * &om[0] * u.transpose()));
    // Re-evaluate in the original coordinates so the report is self-consistent.
    vg_report(model, &OmegaSet::from_matrices(&[back]), &[r1])
}
