//! Dense joint pmfs over labelled discrete variables and exact information measures.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FACTOR_TOL;

/// Variable labels. Sensor-indexed variables are 1-based, matching Y_1..Y_K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    X,
    Y0,
    Y(usize),
    U(usize),
    W,
    Q,
    /// Message emitted by sensor k.
    M(usize),
    Other(u32),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X => write!(f, "X"),
            Var::Y0 => write!(f, "Y0"),
            Var::Y(k) => write!(f, "Y{k}"),
            Var::U(k) => write!(f, "U{k}"),
            Var::W => write!(f, "W"),
            Var::Q => write!(f, "Q"),
            Var::M(k) => write!(f, "M{k}"),
            Var::Other(i) => write!(f, "V{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPmfTensor {
    vars: Vec<Var>,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Walks a row-major multi-index alongside a second linear index with its own strides.
struct Odometer {
    shape: Vec<usize>,
    counter: Vec<usize>,
    strides: Vec<usize>,
    pos: usize,
}

impl Odometer {
    fn new(shape: &[usize], strides: Vec<usize>) -> Self {
        Self { shape: shape.to_vec(), counter: vec![0; shape.len()], strides, pos: 0 }
    }

    fn advance(&mut self) {
        for ax in (0..self.shape.len()).rev() {
            self.counter[ax] += 1;
            self.pos += self.strides[ax];
            if self.counter[ax] < self.shape[ax] {
                return;
            }
            self.pos -= self.strides[ax] * self.shape[ax];
            self.counter[ax] = 0;
        }
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

impl JointPmfTensor {
    /// Builds a validated pmf: entries finite and non-negative, mass 1 within `FACTOR_TOL`.
    pub fn new(axes: Vec<(Var, usize)>, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_parts(axes, data)?;
        let sum: f64 = t.data.iter().sum();
        if (sum - 1.0).abs() > FACTOR_TOL * (t.data.len() as f64).max(1.0) {
            return Err(Error::MassNotOne { which: format!("pmf over {}", t.label()), sum });
        }
        Ok(t)
    }

    /// Like [`JointPmfTensor::new`] without the mass check (for unnormalized measures).
    pub fn from_parts(axes: Vec<(Var, usize)>, data: Vec<f64>) -> Result<Self> {
        let (vars, shape): (Vec<Var>, Vec<usize>) = axes.into_iter().unzip();
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(Error::InvalidInput(format!("duplicate axis {v}")));
            }
        }
        let size: usize = shape.iter().product();
        if size != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "tensor shape {shape:?} needs {size} entries, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(format!("entry {i} = {} is not a probability", data[i])));
        }
        Ok(Self { vars, shape, data })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }

    fn label(&self) -> String {
        self.vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn axis(&self, v: Var) -> Result<usize> {
        self.vars.iter().position(|&w| w == v).ok_or_else(|| Error::UnknownVariable(v.to_string()))
    }

    pub fn size_of(&self, v: Var) -> Result<usize> {
        Ok(self.shape[self.axis(v)?])
    }

    /// Marginal over `keep`, with axes in the order given.
    pub fn marginal(&self, keep: &[Var]) -> Result<JointPmfTensor> {
        let mut out_shape = Vec::with_capacity(keep.len());
        let mut axis_of = Vec::with_capacity(keep.len());
        for (i, &v) in keep.iter().enumerate() {
            if keep[..i].contains(&v) {
                return Err(Error::OverlappingSets);
            }
            let a = self.axis(v)?;
            axis_of.push(a);
            out_shape.push(self.shape[a]);
        }
        let out_strides = row_major_strides(&out_shape);
        let mut strides = vec![0; self.shape.len()];
        for (o, &a) in axis_of.iter().enumerate() {
            strides[a] = out_strides[o];
        }
        let mut out = vec![0.0; out_shape.iter().product()];
        let mut od = Odometer::new(&self.shape, strides);
        for &p in &self.data {
            out[od.pos] += p;
            od.advance();
        }
        Ok(JointPmfTensor { vars: keep.to_vec(), shape: out_shape, data: out })
    }

    /// Appends a new axis `new` with P(new | parents) = `kernel[parents..., new]`.
    pub fn attach(&self, parents: &[Var], new: (Var, usize), kernel: &[f64]) -> Result<JointPmfTensor> {
        if self.vars.contains(&new.0) {
            return Err(Error::InvalidInput(format!("axis {} already present", new.0)));
        }
        let parent_shape: Vec<usize> = parents.iter().map(|&v| self.size_of(v)).collect::<Result<_>>()?;
        let need = parent_shape.iter().product::<usize>() * new.1;
        if kernel.len() != need {
            return Err(Error::DimensionMismatch(format!(
                "kernel for {} has {} entries, expected {need}",
                new.0,
                kernel.len()
            )));
        }
        let pstrides = row_major_strides(&parent_shape);
        let mut strides = vec![0; self.shape.len()];
        for (i, &v) in parents.iter().enumerate() {
            strides[self.axis(v)?] = pstrides[i] * new.1;
        }
        let mut data = Vec::with_capacity(self.data.len() * new.1);
        let mut od = Odometer::new(&self.shape, strides);
        for &p in &self.data {
            let row = &kernel[od.pos..od.pos + new.1];
            data.extend(row.iter().map(|&k| p * k));
            od.advance();
        }
        let mut vars = self.vars.clone();
        vars.push(new.0);
        let mut shape = self.shape.clone();
        shape.push(new.1);
        Ok(JointPmfTensor { vars, shape, data })
    }

    /// Shannon entropy of the full tensor in nats.
    pub fn entropy(&self) -> f64 {
        -self.data.iter().map(|&p| xlogx(p)).sum::<f64>()
    }

    pub fn entropy_of(&self, vars: &[Var]) -> Result<f64> {
        Ok(self.marginal(vars)?.entropy())
    }

    /// H(A | C).
    pub fn conditional_entropy(&self, a: &[Var], c: &[Var]) -> Result<f64> {
        disjoint(a, c)?;
        let ac: Vec<Var> = a.iter().chain(c).copied().collect();
        Ok(self.entropy_of(&ac)? - self.entropy_of(c)?)
    }

    /// Exact I(A; B | C) in nats by direct summation; zero-mass cells contribute 0.
    pub fn conditional_mutual_information(&self, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64> {
        disjoint(a, b)?;
        disjoint(a, c)?;
        disjoint(b, c)?;
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        let abc: Vec<Var> = a.iter().chain(b).chain(c).copied().collect();
        let joint = self.marginal(&abc)?;
        let size = |vs: &[Var]| vs.iter().map(|&v| self.size_of(v)).product::<Result<usize>>();
        let (na, nb, nc) = (size(a)?, size(b)?, size(c)?);
        let d = &joint.data;
        let mut p_ac = vec![0.0; na * nc];
        let mut p_bc = vec![0.0; nb * nc];
        let mut p_c = vec![0.0; nc];
        for ia in 0..na {
            for ib in 0..nb {
                for ic in 0..nc {
                    let p = d[(ia * nb + ib) * nc + ic];
                    p_ac[ia * nc + ic] += p;
                    p_bc[ib * nc + ic] += p;
                    p_c[ic] += p;
                }
            }
        }
        let mut acc = 0.0;
        for ia in 0..na {
            for ib in 0..nb {
                for ic in 0..nc {
                    let p = d[(ia * nb + ib) * nc + ic];
                    if p > 0.0 {
                        acc += p * (p * p_c[ic] / (p_ac[ia * nc + ic] * p_bc[ib * nc + ic])).ln();
                    }
                }
            }
        }
        Ok(acc.max(0.0))
    }

    pub fn mutual_information(&self, a: &[Var], b: &[Var]) -> Result<f64> {
        self.conditional_mutual_information(a, b, &[])
    }
}

fn disjoint(a: &[Var], b: &[Var]) -> Result<()> {
    if a.iter().any(|v| b.contains(v)) {
        Err(Error::OverlappingSets)
    } else {
        Ok(())
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    -(xlogx(p) + xlogx(1.0 - p))
}

/// Kullback-Leibler divergence D(p || q) in nats; +inf when p is not absolutely continuous w.r.t. q.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a <= 0.0 {
                0.0
            } else if b <= 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum()
}
