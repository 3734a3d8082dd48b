use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of sensors a subset mask can address.
pub const MAX_SENSORS: usize = 31;

/// A subset S of the sensor set {1..K}, stored as a bitmask (bit k-1 is sensor k).
///
/// Displayed as a bit string with sensor 1 first: for K = 3, `{1, 3}` is `"101"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetMask {
    bits: u32,
    k: u8,
}

impl SubsetMask {
    pub fn new(bits: u32, k: usize) -> Result<Self> {
        if k > MAX_SENSORS {
            return Err(Error::InvalidInput(format!("K = {k} exceeds {MAX_SENSORS}")));
        }
        if bits >> k != 0 {
            return Err(Error::InvalidInput(format!("mask {bits:#b} has bits outside 1..{k}")));
        }
        Ok(Self { bits, k: k as u8 })
    }

    pub fn empty(k: usize) -> Self {
        Self { bits: 0, k: k as u8 }
    }

    pub fn full(k: usize) -> Self {
        Self { bits: ((1u64 << k) - 1) as u32, k: k as u8 }
    }

    /// Builds a mask from 1-based sensor indices.
    pub fn from_sensors(sensors: &[usize], k: usize) -> Result<Self> {
        let mut bits = 0u32;
        for &s in sensors {
            if s == 0 || s > k {
                return Err(Error::InvalidInput(format!("sensor {s} outside 1..{k}")));
            }
            bits |= 1 << (s - 1);
        }
        Self::new(bits, k)
    }

    /// All 2^K subsets in ascending bitmask order.
    pub fn all(k: usize) -> impl Iterator<Item = SubsetMask> {
        let k8 = k as u8;
        (0..(1u32 << k)).map(move |bits| SubsetMask { bits, k: k8 })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn num_sensors(self) -> usize {
        self.k as usize
    }

    /// Membership test for a 0-based sensor index.
    pub fn contains(self, idx: usize) -> bool {
        self.bits >> idx & 1 == 1
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn is_full(self) -> bool {
        self == Self::full(self.k as usize)
    }

    pub fn complement(self) -> Self {
        Self { bits: !self.bits & Self::full(self.k as usize).bits, k: self.k }
    }

    /// 0-based indices of the members of S.
    pub fn members(self) -> Vec<usize> {
        (0..self.k as usize).filter(|&i| self.contains(i)).collect()
    }

    /// 0-based indices of S^c; together with the side information these form S̄ = {0} ∪ S^c.
    pub fn complement_members(self) -> Vec<usize> {
        self.complement().members()
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => bits |= 1 << i,
                '0' => {}
                _ => return Err(Error::InvalidInput(format!("bad subset string {s:?}"))),
            }
        }
        Self::new(bits, s.chars().count())
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.k as usize {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SubsetMask::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A rate-exponent tuple (R_1..R_K, E) in nats per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExponentPoint {
    pub rates: Vec<f64>,
    pub exponent: f64,
}

impl RateExponentPoint {
    pub fn new(rates: Vec<f64>, exponent: f64) -> Result<Self> {
        check_rates(&rates)?;
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(Error::InvalidInput(format!("exponent {exponent} must be finite and >= 0")));
        }
        Ok(Self { rates, exponent })
    }
}

/// Rates must be finite (or +inf) and non-negative.
pub fn check_rates(rates: &[f64]) -> Result<()> {
    for (i, r) in rates.iter().enumerate() {
        if !(*r >= 0.0) {
            return Err(Error::InvalidRates(format!("R_{} = {r} must be >= 0", i + 1)));
        }
    }
    Ok(())
}
