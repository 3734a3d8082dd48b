//! Discrete-alphabet hypothesis-testing instances.
//!
//! Under the null hypothesis P = P_{X,Y0} ∏_k P_{Yk|X,Y0}; under the
//! alternative Q = Q_{Y0} Q_{X|Y0} Q_{Y1..YK|Y0}, and the two agree on the
//! (X,Y0)- and (Y0,Y1..YK)-marginals. Joint pmfs are stored row-major over
//! (X, Y0, Y1, .., YK); an absent Y0 is an axis of size 1.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dm::tensor::{JointPmfTensor, Var};
use crate::error::{Error, Result};
use crate::FACTOR_TOL;

/// Alphabet sizes and a (P, Q) pair with no structural guarantees.
#[derive(Debug, Clone, PartialEq)]
pub struct HtPmfs {
    pub x: usize,
    pub y0: usize,
    pub sensors: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl HtPmfs {
    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.x, self.y0];
        s.extend(&self.sensors);
        s
    }

    pub fn axes(&self) -> Vec<(Var, usize)> {
        let mut a = vec![(Var::X, self.x), (Var::Y0, self.y0)];
        a.extend(self.sensors.iter().enumerate().map(|(k, &n)| (Var::Y(k + 1), n)));
        a
    }

    /// Number of (y_1..y_K) tuples.
    pub fn sensor_tuple_count(&self) -> usize {
        self.sensors.iter().product()
    }

    pub fn p_tensor(&self) -> Result<JointPmfTensor> {
        JointPmfTensor::from_parts(self.axes(), self.p.clone())
    }

    pub fn q_tensor(&self) -> Result<JointPmfTensor> {
        JointPmfTensor::from_parts(self.axes(), self.q.clone())
    }

    /// Q built from P by making X and (Y1..YK) conditionally independent given Y0.
    pub fn conditional_independence_alternative(x: usize, y0: usize, sensors: Vec<usize>, p: Vec<f64>) -> Self {
        let ny: usize = sensors.iter().product();
        let mut p_xy0 = vec![0.0; x * y0];
        let mut p_y0y = vec![0.0; y0 * ny];
        let mut p_y0 = vec![0.0; y0];
        for a in 0..x {
            for b in 0..y0 {
                for c in 0..ny {
                    let v = p[(a * y0 + b) * ny + c];
                    p_xy0[a * y0 + b] += v;
                    p_y0y[b * ny + c] += v;
                    p_y0[b] += v;
                }
            }
        }
        let mut q = vec![0.0; p.len()];
        for a in 0..x {
            for b in 0..y0 {
                for c in 0..ny {
                    if p_y0[b] > 0.0 {
                        q[(a * y0 + b) * ny + c] = p_xy0[a * y0 + b] * p_y0y[b * ny + c] / p_y0[b];
                    }
                }
            }
        }
        Self { x, y0, sensors, p, q }
    }
}

/// Sums over the sensor tuple and over X/Y0, giving the (X,Y0), (Y0, Y_K) and Y0 marginals.
fn marginals(x: usize, y0: usize, ny: usize, m: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut xy0 = vec![0.0; x * y0];
    let mut y0y = vec![0.0; y0 * ny];
    let mut y0m = vec![0.0; y0];
    for a in 0..x {
        for b in 0..y0 {
            for c in 0..ny {
                let v = m[(a * y0 + b) * ny + c];
                xy0[a * y0 + b] += v;
                y0y[b * ny + c] += v;
                y0m[b] += v;
            }
        }
    }
    (xy0, y0y, y0m)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Decomposes a sensor tuple index into per-sensor symbols.
pub fn decode_tuple(mut idx: usize, sizes: &[usize], out: &mut [usize]) {
    for k in (0..sizes.len()).rev() {
        out[k] = idx % sizes[k];
        idx /= sizes[k];
    }
}

/// A validated instance together with its canonical factors P_{X,Y0} and P_{Yk|X,Y0}.
#[derive(Debug, Clone)]
pub struct DiscreteHTInstance {
    labels: Alphabets,
    pmfs: HtPmfs,
    p_xy0: Vec<f64>,
    /// `p_yk_given[k][(x * |Y0| + y0) * |Yk| + yk]`
    p_yk_given: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabets {
    pub x: Vec<String>,
    #[serde(default)]
    pub y0: Vec<String>,
    pub sensors: Vec<Vec<String>>,
}

impl Alphabets {
    pub fn numbered(x: usize, y0: usize, sensors: &[usize]) -> Self {
        let n = |k: usize| (0..k).map(|i| i.to_string()).collect::<Vec<_>>();
        Self {
            x: n(x),
            y0: if y0 <= 1 { vec![] } else { n(y0) },
            sensors: sensors.iter().map(|&k| n(k)).collect(),
        }
    }
}

/// JSON form: nested arrays indexed [x][y0][y1]..[yK] (the y0 level is omitted when `y0` is empty).
/// `q` may be omitted, in which case the conditional-independence alternative of `p` is used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDiscreteInstance {
    #[serde(flatten)]
    pub alphabets: Alphabets,
    pub p: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Value>,
}

/// Flattens a nested JSON array with the given dimensions (row-major).
pub fn flatten_nested(v: &Value, dims: &[usize]) -> Result<Vec<f64>> {
    fn go(v: &Value, dims: &[usize], out: &mut Vec<f64>) -> Result<()> {
        match dims.split_first() {
            None => {
                let x = v
                    .as_f64()
                    .ok_or_else(|| Error::InvalidInput(format!("expected a number, found {v}")))?;
                out.push(x);
                Ok(())
            }
            Some((&n, rest)) => {
                let arr = v
                    .as_array()
                    .ok_or_else(|| Error::DimensionMismatch(format!("expected an array of length {n}")))?;
                if arr.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "array of length {}, expected {n}",
                        arr.len()
                    )));
                }
                arr.iter().try_for_each(|e| go(e, rest, out))
            }
        }
    }
    let mut out = Vec::with_capacity(dims.iter().product());
    go(v, dims, &mut out)?;
    Ok(out)
}

pub fn nest(data: &[f64], dims: &[usize]) -> Value {
    match dims.split_first() {
        None => serde_json::json!(data[0]),
        Some((&n, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array((0..n).map(|i| nest(&data[i * stride..(i + 1) * stride], rest)).collect())
        }
    }
}

impl RawDiscreteInstance {
    pub fn from_instance(inst: &DiscreteHTInstance) -> Self {
        let pm = inst.pmfs();
        let mut dims = vec![pm.x];
        if !inst.labels.y0.is_empty() {
            dims.push(pm.y0);
        }
        dims.extend(&pm.sensors);
        Self {
            alphabets: inst.labels.clone(),
            p: nest(&pm.p, &dims),
            q: Some(nest(&pm.q, &dims)),
        }
    }
}

impl DiscreteHTInstance {
    pub fn from_raw(raw: &RawDiscreteInstance) -> Result<Self> {
        let a = &raw.alphabets;
        let y0 = a.y0.len().max(1);
        let mut dims = vec![a.x.len()];
        if !a.y0.is_empty() {
            dims.push(a.y0.len());
        }
        dims.extend(a.sensors.iter().map(|s| s.len()));
        if dims.contains(&0) || a.sensors.is_empty() {
            return Err(Error::DimensionMismatch("empty alphabet or no sensors".into()));
        }
        let sensors: Vec<usize> = a.sensors.iter().map(|s| s.len()).collect();
        let p = flatten_nested(&raw.p, &dims)?;
        let pmfs = match &raw.q {
            Some(q) => HtPmfs { x: a.x.len(), y0, sensors, p, q: flatten_nested(q, &dims)? },
            None => HtPmfs::conditional_independence_alternative(a.x.len(), y0, sensors, p),
        };
        Self::validate_with_labels(pmfs, a.clone())
    }

    pub fn validate(pmfs: HtPmfs) -> Result<Self> {
        let labels = Alphabets::numbered(pmfs.x, pmfs.y0, &pmfs.sensors);
        Self::validate_with_labels(pmfs, labels)
    }

    fn validate_with_labels(pmfs: HtPmfs, labels: Alphabets) -> Result<Self> {
        let (nx, ny0) = (pmfs.x, pmfs.y0);
        let ny = pmfs.sensor_tuple_count();
        let size = nx * ny0 * ny;
        if size == 0 || pmfs.p.len() != size || pmfs.q.len() != size {
            return Err(Error::DimensionMismatch(format!(
                "pmfs need {size} entries, got P: {}, Q: {}",
                pmfs.p.len(),
                pmfs.q.len()
            )));
        }
        for (which, m) in [("P", &pmfs.p), ("Q", &pmfs.q)] {
            if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!("{which} has a negative or non-finite entry")));
            }
            let sum: f64 = m.iter().sum();
            if (sum - 1.0).abs() > FACTOR_TOL {
                return Err(Error::MassNotOne { which: which.into(), sum });
            }
        }

        // Canonical factors of P.
        let (p_xy0, p_y0y, _) = marginals(nx, ny0, ny, &pmfs.p);
        let mut p_yk_given = Vec::with_capacity(pmfs.num_sensors());
        let mut sym = vec![0; pmfs.num_sensors()];
        for (k, &nk) in pmfs.sensors.iter().enumerate() {
            let mut f = vec![0.0; nx * ny0 * nk];
            for ab in 0..nx * ny0 {
                for c in 0..ny {
                    decode_tuple(c, &pmfs.sensors, &mut sym);
                    f[ab * nk + sym[k]] += pmfs.p[ab * ny + c];
                }
                if p_xy0[ab] > 0.0 {
                    for v in &mut f[ab * nk..(ab + 1) * nk] {
                        *v /= p_xy0[ab];
                    }
                }
            }
            p_yk_given.push(f);
        }
        let mut residual: f64 = 0.0;
        for ab in 0..nx * ny0 {
            for c in 0..ny {
                decode_tuple(c, &pmfs.sensors, &mut sym);
                let prod = sym
                    .iter()
                    .zip(&pmfs.sensors)
                    .enumerate()
                    .fold(p_xy0[ab], |acc, (k, (&s, &nk))| acc * p_yk_given[k][ab * nk + s]);
                residual = residual.max((prod - pmfs.p[ab * ny + c]).abs());
            }
        }
        if residual > FACTOR_TOL {
            return Err(Error::MarkovViolated {
                which: "P (sensors not conditionally independent given (X, Y0))".into(),
                residual,
            });
        }

        let (q_xy0, q_y0y, q_y0) = marginals(nx, ny0, ny, &pmfs.q);
        let r = max_abs_diff(&p_xy0, &q_xy0);
        if r > FACTOR_TOL {
            return Err(Error::MarginalMismatch { which: "(X, Y0)".into(), residual: r });
        }
        let r = max_abs_diff(&p_y0y, &q_y0y);
        if r > FACTOR_TOL {
            return Err(Error::MarginalMismatch { which: "(Y0, Y1..YK)".into(), residual: r });
        }
        let mut residual: f64 = 0.0;
        for a in 0..nx {
            for b in 0..ny0 {
                for c in 0..ny {
                    let f = if q_y0[b] > 0.0 { q_xy0[a * ny0 + b] * q_y0y[b * ny + c] / q_y0[b] } else { 0.0 };
                    residual = residual.max((f - pmfs.q[(a * ny0 + b) * ny + c]).abs());
                }
            }
        }
        if residual > FACTOR_TOL {
            return Err(Error::MarkovViolated {
                which: "Q (X and sensors not conditionally independent given Y0)".into(),
                residual,
            });
        }

        Ok(Self { labels, pmfs, p_xy0, p_yk_given })
    }

    /// Composes P from factors and pairs it with the conditional-independence alternative.
    pub fn from_factors(x: usize, y0: usize, p_xy0: &[f64], conditionals: &[(usize, Vec<f64>)]) -> Result<Self> {
        let sensors: Vec<usize> = conditionals.iter().map(|(n, _)| *n).collect();
        for (k, (n, f)) in conditionals.iter().enumerate() {
            if f.len() != x * y0 * n {
                return Err(Error::DimensionMismatch(format!("conditional of sensor {} has wrong size", k + 1)));
            }
        }
        if p_xy0.len() != x * y0 {
            return Err(Error::DimensionMismatch("P_{X,Y0} has wrong size".into()));
        }
        let ny: usize = sensors.iter().product();
        let mut p = vec![0.0; x * y0 * ny];
        let mut sym = vec![0; sensors.len()];
        for ab in 0..x * y0 {
            for c in 0..ny {
                decode_tuple(c, &sensors, &mut sym);
                p[ab * ny + c] = sym
                    .iter()
                    .enumerate()
                    .fold(p_xy0[ab], |acc, (k, &s)| acc * conditionals[k].1[ab * sensors[k] + s]);
            }
        }
        Self::validate(HtPmfs::conditional_independence_alternative(x, y0, sensors, p))
    }

    /// X ~ Bern(1/2), no side information, K sensors each seeing X through a BSC.
    pub fn binary_symmetric(crossovers: &[f64]) -> Result<Self> {
        let conds: Vec<(usize, Vec<f64>)> = crossovers
            .iter()
            .map(|&e| (2, vec![1.0 - e, e, e, 1.0 - e]))
            .collect();
        Self::from_factors(2, 1, &[0.5, 0.5], &conds)
    }

    pub fn pmfs(&self) -> &HtPmfs {
        &self.pmfs
    }

    pub fn labels(&self) -> &Alphabets {
        &self.labels
    }

    pub fn num_sensors(&self) -> usize {
        self.pmfs.num_sensors()
    }

    pub fn p_xy0(&self) -> &[f64] {
        &self.p_xy0
    }

    pub fn sensor_conditional(&self, k: usize) -> &[f64] {
        &self.p_yk_given[k]
    }

    pub fn p_tensor(&self) -> JointPmfTensor {
        self.pmfs.p_tensor().expect("validated")
    }

    pub fn q_tensor(&self) -> JointPmfTensor {
        self.pmfs.q_tensor().expect("validated")
    }
}

/// Auxiliaries (U_1..U_K, Q): a time-sharing pmf and per-sensor kernels P_{U_k | Y_k, Q}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestChannelFamily {
    pub q_pmf: Vec<f64>,
    /// `kernels[k][q][y_k][u_k]`
    pub kernels: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TestChannelFamily {
    /// Single time-sharing symbol with the given per-sensor kernels `[y][u]`.
    pub fn without_time_sharing(kernels: Vec<Vec<Vec<f64>>>) -> Self {
        Self { q_pmf: vec![1.0], kernels: kernels.into_iter().map(|k| vec![k]).collect() }
    }

    pub fn identity(inst: &DiscreteHTInstance) -> Self {
        let ks = inst
            .pmfs()
            .sensors
            .iter()
            .map(|&n| (0..n).map(|y| (0..n).map(|u| if u == y { 1.0 } else { 0.0 }).collect()).collect())
            .collect();
        Self::without_time_sharing(ks)
    }

    pub fn constant(inst: &DiscreteHTInstance) -> Self {
        let ks = inst.pmfs().sensors.iter().map(|&n| vec![vec![1.0]; n]).collect();
        Self::without_time_sharing(ks)
    }

    pub fn u_sizes(&self) -> Vec<usize> {
        self.kernels.iter().map(|k| k[0][0].len()).collect()
    }

    pub fn validate(&self, inst: &DiscreteHTInstance) -> Result<()> {
        let nq = self.q_pmf.len();
        let sum: f64 = self.q_pmf.iter().sum();
        if nq == 0 || self.q_pmf.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > FACTOR_TOL {
            return Err(Error::MassNotOne { which: "time-sharing pmf".into(), sum });
        }
        if self.kernels.len() != inst.num_sensors() {
            return Err(Error::AlphabetMismatch(format!(
                "{} kernels for {} sensors",
                self.kernels.len(),
                inst.num_sensors()
            )));
        }
        for (k, kern) in self.kernels.iter().enumerate() {
            let ny = inst.pmfs().sensors[k];
            if kern.len() != nq || kern.iter().any(|rows| rows.len() != ny) {
                return Err(Error::AlphabetMismatch(format!("kernel {} must be |Q| x |Y_{}| x |U|", k + 1, k + 1)));
            }
            let nu = kern[0].first().map_or(0, |r| r.len());
            for rows in kern {
                for r in rows {
                    if r.len() != nu || nu == 0 {
                        return Err(Error::AlphabetMismatch(format!("kernel {} has ragged rows", k + 1)));
                    }
                    let s: f64 = r.iter().sum();
                    if r.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > FACTOR_TOL {
                        return Err(Error::MassNotOne { which: format!("kernel {} row", k + 1), sum: s });
                    }
                }
            }
        }
        Ok(())
    }

    /// Joint pmf over (X, Y0, Y1..YK, Q, U1..UK) under the null hypothesis.
    pub fn joint(&self, inst: &DiscreteHTInstance) -> Result<JointPmfTensor> {
        self.validate(inst)?;
        let mut t = inst.p_tensor().attach(&[], (Var::Q, self.q_pmf.len()), &self.q_pmf)?;
        for (k, kern) in self.kernels.iter().enumerate() {
            let flat: Vec<f64> = kern.iter().flatten().flatten().copied().collect();
            t = t.attach(&[Var::Q, Var::Y(k + 1)], (Var::U(k + 1), kern[0][0].len()), &flat)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_factors_accepted() {
        let inst = DiscreteHTInstance::from_factors(
            2,
            2,
            &[0.1, 0.2, 0.3, 0.4],
            &[
                (2, vec![0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.5, 0.5]),
                (3, vec![0.2, 0.3, 0.5, 0.1, 0.1, 0.8, 0.3, 0.3, 0.4, 0.6, 0.2, 0.2]),
            ],
        )
        .unwrap();
        assert_eq!(inst.pmfs().sensors, vec![2, 3]);
        assert!((inst.sensor_conditional(1)[5] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn mismatched_xy0_marginal_rejected() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let mut pm = inst.pmfs().clone();
        // Q'(x, y) = Q'(x) P(y) with Q'(x) = (0.6, 0.4): factorizes, wrong X marginal.
        pm.q = vec![0.3, 0.3, 0.2, 0.2];
        assert!(matches!(
            DiscreteHTInstance::validate(pm),
            Err(Error::MarginalMismatch { which, .. }) if which == "(X, Y0)"
        ));
    }

    #[test]
    fn conditionally_correlated_sensors_rejected() {
        // Given X, (Y1, Y2) is a pair of binary symbols with correlation 0.3.
        let rho: f64 = 0.3;
        let joint_given = |x: usize, y1: usize, y2: usize| -> f64 {
            let m = if x == 0 { 0.2 } else { 0.7 }; // P(Y=1 | X)
            let p1 = if y1 == 1 { m } else { 1.0 - m };
            let p2 = if y2 == 1 { m } else { 1.0 - m };
            let sign = if y1 == y2 { 1.0 } else { -1.0 };
            p1 * p2 + sign * rho * m * (1.0 - m)
        };
        let mut p = Vec::new();
        for x in 0..2 {
            for y1 in 0..2 {
                for y2 in 0..2 {
                    p.push(0.5 * joint_given(x, y1, y2));
                }
            }
        }
        // Conditional-independence residual by exhaustive summation.
        let mut residual: f64 = 0.0;
        for x in 0..2 {
            let px: f64 = (0..4).map(|c| p[x * 4 + c]).sum();
            for y1 in 0..2 {
                for y2 in 0..2 {
                    let a: f64 = (0..2).map(|b| p[x * 4 + y1 * 2 + b]).sum::<f64>() / px;
                    let b: f64 = (0..2).map(|a| p[x * 4 + a * 2 + y2]).sum::<f64>() / px;
                    residual = residual.max((p[x * 4 + y1 * 2 + y2] - px * a * b).abs());
                }
            }
        }
        assert!(residual > FACTOR_TOL);
        let pm = HtPmfs::conditional_independence_alternative(2, 1, vec![2, 2], p);
        assert!(matches!(DiscreteHTInstance::validate(pm), Err(Error::MarkovViolated { .. })));
    }

    #[test]
    fn mass_checked() {
        let mut pm = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap().pmfs().clone();
        pm.p[0] += 0.01;
        assert!(matches!(DiscreteHTInstance::validate(pm), Err(Error::MassNotOne { .. })));
    }

    #[test]
    fn json_roundtrip() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1, 0.2]).unwrap();
        let raw = RawDiscreteInstance::from_instance(&inst);
        let text = serde_json::to_string(&raw).unwrap();
        let back = DiscreteHTInstance::from_raw(&serde_json::from_str(&text).unwrap()).unwrap();
        let (a, b) = (back.pmfs(), inst.pmfs());
        assert_eq!((a.x, a.y0, &a.sensors), (b.x, b.y0, &b.sensors));
        for (u, v) in a.p.iter().chain(&a.q).zip(b.p.iter().chain(&b.q)) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_rows_must_normalize() {
        let inst = DiscreteHTInstance::binary_symmetric(&[0.1]).unwrap();
        let ch = TestChannelFamily::without_time_sharing(vec![vec![vec![0.5, 0.4], vec![0.0, 1.0]]]);
        assert!(ch.validate(&inst).is_err());
        assert!(TestChannelFamily::identity(&inst).validate(&inst).is_ok());
    }
}
