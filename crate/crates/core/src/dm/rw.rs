use serde::{Deserialize, Serialize};

use super::tensor::{JointPmfTensor, Var};
use super::theorem1::check_rate_len;
use crate::error::{Error, Result};
use crate::model::discrete::DiscreteHTInstance;
use crate::model::subset::SubsetMask;
use crate::FACTOR_TOL;

/// Auxiliaries (U_1..U_K, W, Q) of the outer bound: (W, Q) drawn independently
/// of the sources and U_k generated from (Y_k, W, Q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwAuxiliary {
    /// `wq_pmf[w][q]`
    pub wq_pmf: Vec<Vec<f64>>,
    /// `kernels[k][w][q][y_k][u_k]`
    pub kernels: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl RwAuxiliary {
    fn sizes(&self) -> (usize, usize) {
        (self.wq_pmf.len(), self.wq_pmf.first().map_or(0, |r| r.len()))
    }

    /// Joint pmf over (X, Y0, Y1..YK, W, Q, U1..UK); independence of (W, Q) holds by construction.
    pub fn joint(&self, inst: &DiscreteHTInstance) -> Result<JointPmfTensor> {
        let (nw, nq) = self.sizes();
        if nw == 0 || nq == 0 || self.wq_pmf.iter().any(|r| r.len() != nq) {
            return Err(Error::AlphabetMismatch("wq_pmf must be a non-empty |W| x |Q| array".into()));
        }
        let flat: Vec<f64> = self.wq_pmf.concat();
        let sum: f64 = flat.iter().sum();
        if flat.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > FACTOR_TOL {
            return Err(Error::MassNotOne { which: "wq_pmf".into(), sum });
        }
        if self.kernels.len() != inst.num_sensors() {
            return Err(Error::AlphabetMismatch(format!(
                "{} kernels for {} sensors",
                self.kernels.len(),
                inst.num_sensors()
            )));
        }
        let w_marg: Vec<f64> = self.wq_pmf.iter().map(|r| r.iter().sum()).collect();
        let q_given_w: Vec<f64> = self
            .wq_pmf
            .iter()
            .zip(&w_marg)
            .flat_map(|(r, &m)| r.iter().map(move |&v| if m > 0.0 { v / m } else { 1.0 / nq as f64 }))
            .collect();
        let mut t = inst.p_tensor().attach(&[], (Var::W, nw), &w_marg)?;
        t = t.attach(&[Var::W], (Var::Q, nq), &q_given_w)?;
        for (k, kern) in self.kernels.iter().enumerate() {
            let ny = inst.pmfs().sensors[k];
            let nu = kern.first().and_then(|a| a.first()).and_then(|b| b.first()).map_or(0, |r| r.len());
            let ok = nu > 0
                && kern.len() == nw
                && kern.iter().all(|a| a.len() == nq && a.iter().all(|b| b.len() == ny && b.iter().all(|r| r.len() == nu)));
            if !ok {
                return Err(Error::AlphabetMismatch(format!("kernel {} must be |W| x |Q| x |Y| x |U|", k + 1)));
            }
            for row in kern.iter().flatten().flatten() {
                let s: f64 = row.iter().sum();
                if row.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > FACTOR_TOL {
                    return Err(Error::MassNotOne { which: format!("kernel {} row", k + 1), sum: s });
                }
            }
            let flat: Vec<f64> = kern.iter().flatten().flatten().flatten().copied().collect();
            t = t.attach(&[Var::W, Var::Q, Var::Y(k + 1)], (Var::U(k + 1), nu), &flat)?;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwSubsetSlack {
    pub subset: SubsetMask,
    /// I(U_{S^c};X|Y_0,W,Q) − I(U_{S^c};X|Y_0,Q); nonnegative when (W,Q) ⊥ (X,Y_0).
    pub conditioning_slack: f64,
    /// Σ_S R_k − [I(U_S;X|U_{S^c},Y_0,Q) + Σ_S I(U_k;Y_k|X,W,Y_0,Q)].
    pub outer_rate_slack: f64,
    /// Σ_S R_k − [E − I(U_{S^c};X|Y_0,W,Q) + Σ_S I(U_k;Y_k|X,W,Y_0,Q)] with E = I(U_K;X|Y_0,Q).
    pub final_slack: f64,
    /// final_slack ≥ outer_rate_slack (the weakened bound is implied).
    pub implied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwReport {
    pub schema_version: String,
    /// Largest exponent allowed by the outer bound for these auxiliaries, I(U_K;X|Y_0,Q).
    pub exponent: f64,
    pub subsets: Vec<RwSubsetSlack>,
}

const INDEPENDENCE_TOL: f64 = 1e-12;

fn us(ks: &[usize]) -> Vec<Var> {
    ks.iter().map(|&k| Var::U(k + 1)).collect()
}

/// Checks the weakening chain, with A = X, on an explicit joint pmf over
/// (X, Y0, Y1..YK, W, Q, U1..UK).
pub fn rw_weakening_check_joint(joint: &JointPmfTensor, k: usize, rates: &[f64]) -> Result<RwReport> {
    check_rate_len(k, rates)?;
    let sources: Vec<Var> = [Var::X, Var::Y0].into_iter().chain((1..=k).map(Var::Y)).collect();
    let dep = joint.mutual_information(&[Var::W, Var::Q], &sources)?;
    if dep > INDEPENDENCE_TOL {
        return Err(Error::AuxIndependenceViolated);
    }
    let all: Vec<usize> = (0..k).collect();
    let exponent = joint.conditional_mutual_information(&us(&all), &[Var::X], &[Var::Y0, Var::Q])?;
    let mut own = vec![0.0; k];
    for (i, v) in own.iter_mut().enumerate() {
        *v = joint.conditional_mutual_information(
            &[Var::U(i + 1)],
            &[Var::Y(i + 1)],
            &[Var::X, Var::W, Var::Y0, Var::Q],
        )?;
    }
    let subsets = SubsetMask::all(k)
        .map(|s| {
            let (sm, sc) = (s.members(), s.complement_members());
            let rate: f64 = sm.iter().map(|&i| rates[i]).sum();
            let own_s: f64 = sm.iter().map(|&i| own[i]).sum();
            let i_q = joint.conditional_mutual_information(&us(&sc), &[Var::X], &[Var::Y0, Var::Q])?;
            let i_wq = joint.conditional_mutual_information(&us(&sc), &[Var::X], &[Var::Y0, Var::W, Var::Q])?;
            let mut cond = vec![Var::Y0, Var::Q];
            cond.extend(us(&sc));
            let i_s = joint.conditional_mutual_information(&us(&sm), &[Var::X], &cond)?;
            let outer_rate_slack = rate - (i_s + own_s);
            let final_slack = rate - (exponent - i_wq + own_s);
            Ok(RwSubsetSlack {
                subset: s,
                conditioning_slack: i_wq - i_q,
                outer_rate_slack,
                final_slack,
                implied: final_slack >= outer_rate_slack - 1e-12,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RwReport { schema_version: crate::SCHEMA_VERSION.into(), exponent, subsets })
}

/// Numerically verifies the weakening of the outer bound for the given auxiliaries and rates.
pub fn rw_weakening_check(instance: &DiscreteHTInstance, aux: &RwAuxiliary, rates: &[f64]) -> Result<RwReport> {
    rw_weakening_check_joint(&aux.joint(instance)?, instance.num_sensors(), rates)
}
