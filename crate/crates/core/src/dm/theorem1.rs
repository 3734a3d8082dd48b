use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Var;
use crate::error::{Error, Result};
use crate::model::discrete::{DiscreteHTInstance, TestChannelFamily};
use crate::model::subset::{check_rates, SubsetMask};

/// Per-subset bounds and the resulting exponent for one choice of test channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmBoundReport {
    pub schema_version: String,
    pub per_subset: BTreeMap<SubsetMask, f64>,
    pub binding: Vec<SubsetMask>,
    pub exponent: f64,
}

impl DmBoundReport {
    pub(crate) fn from_values(values: Vec<(SubsetMask, f64)>) -> Self {
        let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * (1.0 + min.abs());
        let binding = values.iter().filter(|v| v.1 <= min + tol).map(|v| v.0).collect();
        Self {
            schema_version: crate::SCHEMA_VERSION.into(),
            per_subset: values.into_iter().collect(),
            binding,
            exponent: min.max(0.0),
        }
    }
}

fn sensor_vars(ks: &[usize]) -> Vec<Var> {
    ks.iter().map(|&k| Var::U(k + 1)).collect()
}

pub(crate) fn check_rate_len(k: usize, rates: &[f64]) -> Result<()> {
    check_rates(rates)?;
    if rates.len() != k {
        return Err(Error::InvalidRates(format!("{} rates for {k} sensors", rates.len())));
    }
    Ok(())
}

/// I(U_{S^c}; X | Y_0, Q) + Σ_{k∈S} (R_k − I(Y_k; U_k | X, Y_0, Q)) for every S, by direct summation
/// over the joint pmf of (X, Y_0, Y_1..Y_K, Q, U_1..U_K).
pub fn evaluate_theorem1_bound(
    instance: &DiscreteHTInstance,
    channels: &TestChannelFamily,
    rates: &[f64],
) -> Result<DmBoundReport> {
    let k = instance.num_sensors();
    check_rate_len(k, rates)?;
    let joint = channels.joint(instance)?;
    let mut own = vec![0.0; k];
    for (i, v) in own.iter_mut().enumerate() {
        *v = joint.conditional_mutual_information(&[Var::Y(i + 1)], &[Var::U(i + 1)], &[Var::X, Var::Y0, Var::Q])?;
    }
    let values = SubsetMask::all(k)
        .map(|s| {
            let info = joint.conditional_mutual_information(
                &sensor_vars(&s.complement_members()),
                &[Var::X],
                &[Var::Y0, Var::Q],
            )?;
            let rest: f64 = s.members().iter().map(|&i| rates[i] - own[i]).sum();
            Ok((s, info + rest))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DmBoundReport::from_values(values))
}

/// D = H(X|Y_0) − E, the log-loss distortion matching exponent `e`.
pub fn ceo_distortion_equivalent(instance: &DiscreteHTInstance, e: f64) -> Result<f64> {
    if !(e >= 0.0 && e.is_finite()) {
        return Err(Error::InvalidInput(format!("exponent {e} must be finite and non-negative")));
    }
    let h = instance.p_tensor().conditional_entropy(&[Var::X], &[Var::Y0])?;
    if e > h + 1e-12 {
        return Err(Error::ExponentExceedsEntropy { exponent: e, entropy: h });
    }
    Ok((h - e).max(0.0))
}

/// Closed-form evaluation of the subset bounds for one time-sharing slice, using
/// the Markov structure U_k − Y_k − (X, Y_0) − Y_{k^c}.
///
/// `kernels[k]` is row-major `[y][u]` with `u_sizes[k]` columns.
pub(crate) struct FastEvaluator<'a> {
    instance: &'a DiscreteHTInstance,
    nxy0: usize,
    ny0: usize,
    nx: usize,
    h_x_given_y0: f64,
    subsets: Vec<SubsetMask>,
}

impl<'a> FastEvaluator<'a> {
    pub fn new(instance: &'a DiscreteHTInstance) -> Self {
        let pm = instance.pmfs();
        let (nx, ny0) = (pm.x, pm.y0);
        let pxy = instance.p_xy0();
        let mut h = 0.0;
        for y0 in 0..ny0 {
            let py0: f64 = (0..nx).map(|x| pxy[x * ny0 + y0]).sum();
            for x in 0..nx {
                let p = pxy[x * ny0 + y0];
                if p > 0.0 {
                    h -= p * (p / py0).ln();
                }
            }
        }
        Self {
            instance,
            nxy0: nx * ny0,
            ny0,
            nx,
            h_x_given_y0: h,
            subsets: SubsetMask::all(instance.num_sensors()).collect(),
        }
    }

    pub fn subsets(&self) -> &[SubsetMask] {
        &self.subsets
    }

    /// Subset values (same order as `subsets()`) written into `out`.
    pub fn eval(&self, kernels: &[&[f64]], u_sizes: &[usize], rates: &[f64], out: &mut [f64]) {
        let k = kernels.len();
        let pxy = self.instance.p_xy0();
        // P(u_k | x, y0) and I(Y_k; U_k | X, Y_0) = H(U_k | X, Y_0) − H(U_k | Y_k).
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut own = vec![0.0; k];
        for i in 0..k {
            let cond = self.instance.sensor_conditional(i);
            let nu = u_sizes[i];
            let ny = cond.len() / self.nxy0;
            let mut ak = vec![0.0; self.nxy0 * nu];
            let mut py = vec![0.0; ny];
            let mut h_u_xy0 = 0.0;
            for ab in 0..self.nxy0 {
                let row = &mut ak[ab * nu..(ab + 1) * nu];
                for y in 0..ny {
                    let c = cond[ab * ny + y];
                    py[y] += pxy[ab] * c;
                    for u in 0..nu {
                        row[u] += c * kernels[i][y * nu + u];
                    }
                }
                h_u_xy0 -= pxy[ab] * row.iter().map(|&p| xlogx(p)).sum::<f64>();
            }
            let mut h_u_y = 0.0;
            for y in 0..ny {
                h_u_y -= py[y] * kernels[i][y * nu..(y + 1) * nu].iter().map(|&p| xlogx(p)).sum::<f64>();
            }
            own[i] = (h_u_xy0 - h_u_y).max(0.0);
            a.push(ak);
        }

        let mut digits = vec![0usize; k];
        let mut p_xu = Vec::new();
        for (si, s) in self.subsets.iter().enumerate() {
            let sc = s.complement_members();
            let nsc: usize = sc.iter().map(|&i| u_sizes[i]).product();
            // H(X | U_{S^c}, Y_0) from P(x, y0, u_{S^c}) = P(x, y0) Π P(u_k | x, y0).
            let mut h_x_given = 0.0;
            p_xu.clear();
            p_xu.resize(self.nx, 0.0);
            for y0 in 0..self.ny0 {
                for c in 0..nsc {
                    let mut rem = c;
                    for (j, &i) in sc.iter().enumerate().rev() {
                        digits[j] = rem % u_sizes[i];
                        rem /= u_sizes[i];
                    }
                    let mut tot = 0.0;
                    for x in 0..self.nx {
                        let ab = x * self.ny0 + y0;
                        let mut p = pxy[ab];
                        for (j, &i) in sc.iter().enumerate() {
                            p *= a[i][ab * u_sizes[i] + digits[j]];
                        }
                        p_xu[x] = p;
                        tot += p;
                    }
                    if tot > 0.0 {
                        for &p in p_xu.iter() {
                            if p > 0.0 {
                                h_x_given -= p * (p / tot).ln();
                            }
                        }
                    }
                }
            }
            let info = (self.h_x_given_y0 - h_x_given).max(0.0);
            let rest: f64 = s.members().iter().map(|&i| rates[i] - own[i]).sum();
            out[si] = info + rest;
        }
    }
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Same values as [`evaluate_theorem1_bound`], via [`FastEvaluator`] slice by slice.
pub(crate) fn evaluate_fast(
    instance: &DiscreteHTInstance,
    channels: &TestChannelFamily,
    rates: &[f64],
) -> Result<Vec<(SubsetMask, f64)>> {
    channels.validate(instance)?;
    let ev = FastEvaluator::new(instance);
    let u_sizes = channels.u_sizes();
    let mut acc = vec![0.0; ev.subsets().len()];
    let mut buf = vec![0.0; acc.len()];
    let zero = vec![0.0; rates.len()];
    for (q, &w) in channels.q_pmf.iter().enumerate() {
        let flat: Vec<Vec<f64>> = channels.kernels.iter().map(|k| k[q].concat()).collect();
        let refs: Vec<&[f64]> = flat.iter().map(|v| v.as_slice()).collect();
        ev.eval(&refs, &u_sizes, &zero, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * b;
        }
    }
    Ok(ev
        .subsets()
        .iter()
        .zip(acc)
        .map(|(&s, v)| (s, v + s.members().iter().map(|&i| rates[i]).sum::<f64>()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dm::tensor::binary_entropy;

    fn bsc_channel(b: f64) -> TestChannelFamily {
        TestChannelFamily::without_time_sharing(vec![vec![vec![1.0 - b, b], vec![b, 1.0 - b]]])
    }

    #[test]
    fn constant_channels_give_zero() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1, 0.3]).unwrap();
        let r = evaluate_theorem1_bound(&inst, &TestChannelFamily::constant(&inst), &[0.5, 0.2]).unwrap();
        assert_eq!(r.exponent, 0.0);
        assert!(r.per_subset[&SubsetMask::empty(2)].abs() < 1e-15);
    }

    #[test]
    fn identity_channel_values() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let r = evaluate_theorem1_bound(&inst, &TestChannelFamily::identity(&inst), &[1.0]).unwrap();
        let h = binary_entropy(0.1);
        assert!((r.per_subset[&SubsetMask::empty(1)] - (2f64.ln() - h)).abs() < 1e-14);
        assert!((r.per_subset[&SubsetMask::full(1)] - (1.0 - h)).abs() < 1e-14);
        assert!((r.exponent - 0.3680642).abs() < 1e-7);
        assert!((r.per_subset[&SubsetMask::full(1)] - 0.674917).abs() < 1e-6);
    }

    #[test]
    fn cascade_channel_values() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let r = evaluate_theorem1_bound(&inst, &bsc_channel(0.2), &[0.2]).unwrap();
        assert!((r.per_subset[&SubsetMask::empty(1)] - 0.120090).abs() < 5e-7);
        assert!((r.per_subset[&SubsetMask::full(1)] - 0.1273455).abs() < 1e-7);
        assert!((r.exponent - 0.120090).abs() < 5e-7);
        assert_eq!(r.binding, vec![SubsetMask::empty(1)]);
    }

    #[test]
    fn fast_evaluator_agrees_with_tensor() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1, 0.25]).unwrap();
        let ch = TestChannelFamily {
            q_pmf: vec![0.3, 0.7],
            kernels: vec![
                vec![vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]], vec![vec![0.5, 0.4, 0.1], vec![0.0, 0.1, 0.9]]],
                vec![vec![vec![0.9, 0.1], vec![0.4, 0.6]], vec![vec![0.2, 0.8], vec![1.0, 0.0]]],
            ],
        };
        let rates = [0.2, 0.05];
        let slow = evaluate_theorem1_bound(&inst, &ch, &rates).unwrap();
        for (s, v) in evaluate_fast(&inst, &ch, &rates).unwrap() {
            assert!((slow.per_subset[&s] - v).abs() < 1e-13, "{s}: {} vs {v}", slow.per_subset[&s]);
        }
    }

    #[test]
    fn ceo_equivalent() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        assert!((ceo_distortion_equivalent(&inst, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(ceo_distortion_equivalent(&inst, 2f64.ln()).unwrap().abs() < 1e-15);
        assert!((ceo_distortion_equivalent(&inst, 0.3).unwrap() - 0.393147).abs() < 1e-6);
        assert!(matches!(ceo_distortion_equivalent(&inst, 0.8), Err(Error::ExponentExceedsEntropy { .. })));
    }
}
