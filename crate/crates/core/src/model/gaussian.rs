//! Jointly Gaussian sensor-network models.
//!
//! Y_0 = H_0 X + Z_0 at the detector and Y_k = H_k X + Z_k at sensor k, with
//! noises independent of X and Z_S ⊸ Z_0 ⊸ Z_{S^c} for every S. The noise
//! of sensor k is described by its cross-covariance with Z_0 and its
//! conditional covariance given Z_0; the full covariance of (Z_0, Z_1..Z_K)
//! is assembled from these blocks.
//!
//! Matrices are real-valued. The [`Convention`] flag selects between the
//! circularly-symmetric complex entropy `log|πe Σ|` and the real entropy
//! `½ log|2πe Σ|`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use super::linalg::{self, Mat};
use crate::error::{Error, Result};
use crate::PSD_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Real,
    /// Circularly-symmetric complex vectors.
    #[default]
    Complex,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::Real => "real",
            Convention::Complex => "complex",
        }
    }
}

/// Differential entropy of a Gaussian vector with covariance `cov`, in nats.
pub fn gaussian_entropy(cov: &Mat, convention: Convention) -> Result<f64> {
    linalg::check_positive_definite(cov, "covariance")?;
    let n = cov.nrows() as f64;
    let ld = linalg::logdet_spd(cov).ok_or_else(|| Error::NotPositiveDefinite("covariance".into()))?;
    Ok(match convention {
        Convention::Complex => n * (PI * E).ln() + ld,
        Convention::Real => 0.5 * (n * (2.0 * PI * E).ln() + ld),
    })
}

/// JSON description of one sensor.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawSensor {
    pub h: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_k0: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_k: Vec<Vec<f64>>,
}

/// JSON description of a Gaussian network model.
///
/// Either every sensor carries `sigma_k0`/`sigma_k`, or `noise_covariance`
/// gives the full covariance of (Z_0, Z_1..Z_K) and the sensor blocks are left empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawGaussianModel {
    #[serde(default)]
    pub convention: Convention,
    pub sigma_x: Vec<Vec<f64>>,
    #[serde(default)]
    pub h0: Vec<Vec<f64>>,
    #[serde(default)]
    pub sigma_0: Vec<Vec<f64>>,
    pub sensors: Vec<RawSensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct GaussianSensor {
    pub h: Mat,
    pub sigma_k0: Mat,
    pub sigma_k: Mat,
}

#[derive(Debug, Clone)]
pub struct GaussianNetworkModel {
    convention: Convention,
    sigma_x: Mat,
    h0: Mat,
    sigma_0: Mat,
    sensors: Vec<GaussianSensor>,
    noise_cov: Mat,
    /// Row offset of each sensor block inside `noise_cov` (Z_0 occupies `0..n_0`).
    offsets: Vec<usize>,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<Mat> {
    // An empty list stands for any matrix with a zero dimension.
    if rows.is_empty() && (nrows == 0 || ncols == 0) {
        return Ok(Mat::zeros(nrows, ncols));
    }
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch(format!(
            "`{name}` has {} rows, expected {nrows}",
            rows.len()
        )));
    }
    linalg::from_rows(rows, ncols)
        .map_err(|e| Error::DimensionMismatch(format!("`{name}`: {e}")))
}

impl GaussianNetworkModel {
    /// Validates a raw model and assembles the full noise covariance.
    pub fn validate(raw: &RawGaussianModel) -> Result<Self> {
        let n_x = raw.sigma_x.len();
        if n_x == 0 {
            return Err(Error::DimensionMismatch("sigma_x is empty".into()));
        }
        let sigma_x = matrix(&raw.sigma_x, n_x, n_x, "sigma_x")?;
        let n_0 = raw.h0.len();
        let h0 = matrix(&raw.h0, n_0, n_x, "h0")?;
        if raw.sensors.is_empty() {
            return Err(Error::DimensionMismatch("at least one sensor is required".into()));
        }
        let mut hs = Vec::with_capacity(raw.sensors.len());
        for (k, s) in raw.sensors.iter().enumerate() {
            let n_k = s.h.len();
            if n_k == 0 {
                return Err(Error::DimensionMismatch(format!("sensor {} has no outputs", k + 1)));
            }
            hs.push(matrix(&s.h, n_k, n_x, &format!("sensors[{}].h", k + 1))?);
        }

        if let Some(full) = &raw.noise_covariance {
            if raw.sensors.iter().any(|s| !s.sigma_k.is_empty() || !s.sigma_k0.is_empty()) {
                return Err(Error::InvalidInput(
                    "give either noise_covariance or per-sensor sigma blocks, not both".into(),
                ));
            }
            let total = n_0 + hs.iter().map(|h| h.nrows()).sum::<usize>();
            let full = matrix(full, total, total, "noise_covariance")?;
            return Self::from_full_noise_covariance(raw.convention, sigma_x, h0, hs, full);
        }

        let sigma_0 = matrix(&raw.sigma_0, n_0, n_0, "sigma_0")?;
        let mut sensors = Vec::with_capacity(hs.len());
        for (k, (s, h)) in raw.sensors.iter().zip(hs).enumerate() {
            let n_k = h.nrows();
            let sigma_k0 = matrix(&s.sigma_k0, n_k, n_0, &format!("sensors[{}].sigma_k0", k + 1))?;
            let sigma_k = matrix(&s.sigma_k, n_k, n_k, &format!("sensors[{}].sigma_k", k + 1))?;
            sensors.push(GaussianSensor { h, sigma_k0, sigma_k });
        }
        Self::from_blocks(raw.convention, sigma_x, h0, sigma_0, sensors)
    }

    pub fn from_blocks(
        convention: Convention,
        sigma_x: Mat,
        h0: Mat,
        sigma_0: Mat,
        sensors: Vec<GaussianSensor>,
    ) -> Result<Self> {
        let n_x = sigma_x.nrows();
        let n_0 = h0.nrows();
        if sigma_x.ncols() != n_x || h0.ncols() != n_x || sigma_0.shape() != (n_0, n_0) {
            return Err(Error::DimensionMismatch("sigma_x/h0/sigma_0 shapes disagree".into()));
        }
        linalg::check_positive_definite(&sigma_x, "sigma_x")?;
        linalg::check_positive_definite(&sigma_0, "sigma_0")?;
        for (k, s) in sensors.iter().enumerate() {
            let n_k = s.h.nrows();
            if s.h.ncols() != n_x || s.sigma_k0.shape() != (n_k, n_0) || s.sigma_k.shape() != (n_k, n_k)
            {
                return Err(Error::DimensionMismatch(format!("sensor {} block shapes disagree", k + 1)));
            }
            linalg::check_positive_definite(&s.sigma_k, &format!("sensors[{}].sigma_k", k + 1))?;
        }

        let sigma_0_inv = linalg::inverse_spd(&sigma_0)
            .ok_or_else(|| Error::NotPositiveDefinite("sigma_0".into()))?;
        let mut offsets = Vec::with_capacity(sensors.len());
        let mut total = n_0;
        for s in &sensors {
            offsets.push(total);
            total += s.h.nrows();
        }
        let mut noise = Mat::zeros(total, total);
        noise.view_mut((0, 0), (n_0, n_0)).copy_from(&sigma_0);
        for (j, sj) in sensors.iter().enumerate() {
            let oj = offsets[j];
            let nj = sj.h.nrows();
            noise.view_mut((oj, 0), (nj, n_0)).copy_from(&sj.sigma_k0);
            noise.view_mut((0, oj), (n_0, nj)).copy_from(&sj.sigma_k0.transpose());
            let left = &sj.sigma_k0 * &sigma_0_inv;
            for (k, sk) in sensors.iter().enumerate() {
                let ok = offsets[k];
                let mut block = &left * sk.sigma_k0.transpose();
                if j == k {
                    block += &sj.sigma_k;
                }
                noise.view_mut((oj, ok), (nj, sk.h.nrows())).copy_from(&block);
            }
        }
        linalg::check_positive_definite(&noise, "noise_covariance")?;

        Ok(Self { convention, sigma_x, h0, sigma_0, sensors, noise_cov: noise, offsets })
    }

    /// Recovers the block description from a full noise covariance, rejecting
    /// covariances whose sensor-sensor blocks are not explained through Z_0.
    pub fn from_full_noise_covariance(
        convention: Convention,
        sigma_x: Mat,
        h0: Mat,
        hs: Vec<Mat>,
        full: Mat,
    ) -> Result<Self> {
        let n_0 = h0.nrows();
        linalg::check_positive_definite(&full, "noise_covariance")?;
        let sigma_0 = full.view((0, 0), (n_0, n_0)).into_owned();
        linalg::check_positive_definite(&sigma_0, "sigma_0")?;
        let sigma_0_inv = linalg::inverse_spd(&sigma_0)
            .ok_or_else(|| Error::NotPositiveDefinite("sigma_0".into()))?;
        let mut offsets = Vec::new();
        let mut o = n_0;
        for h in &hs {
            offsets.push(o);
            o += h.nrows();
        }
        let scale = full.amax().max(f64::MIN_POSITIVE);
        let cross: Vec<Mat> = hs
            .iter()
            .zip(&offsets)
            .map(|(h, &ok)| full.view((ok, 0), (h.nrows(), n_0)).into_owned())
            .collect();
        let mut residual: f64 = 0.0;
        for j in 0..hs.len() {
            for k in 0..hs.len() {
                if j == k {
                    continue;
                }
                let given = full.view((offsets[j], offsets[k]), (hs[j].nrows(), hs[k].nrows()));
                let implied = &cross[j] * &sigma_0_inv * cross[k].transpose();
                residual = residual.max((given - implied).amax() / scale);
            }
        }
        if residual > 1e-9 {
            return Err(Error::MarkovStructureViolated { residual });
        }
        let sensors = hs
            .into_iter()
            .zip(cross)
            .zip(&offsets)
            .map(|((h, sigma_k0), &ok)| {
                let n_k = h.nrows();
                let kk = full.view((ok, ok), (n_k, n_k)).into_owned();
                let sigma_k = linalg::symmetrize(&(kk - &sigma_k0 * &sigma_0_inv * sigma_k0.transpose()));
                GaussianSensor { h, sigma_k0, sigma_k }
            })
            .collect();
        Self::from_blocks(convention, sigma_x, h0, sigma_0, sensors)
    }

    /// Scalar K-sensor model without side information: Y_k = X + Z_k, Z_k ~ (0, σ_k²).
    pub fn scalar_independent(convention: Convention, sigma_x2: f64, noise_vars: &[f64]) -> Result<Self> {
        let sensors = noise_vars
            .iter()
            .map(|&v| GaussianSensor {
                h: Mat::from_element(1, 1, 1.0),
                sigma_k0: Mat::zeros(1, 0),
                sigma_k: Mat::from_element(1, 1, v),
            })
            .collect();
        Self::from_blocks(
            convention,
            Mat::from_element(1, 1, sigma_x2),
            Mat::zeros(0, 1),
            Mat::zeros(0, 0),
            sensors,
        )
    }

    pub fn to_raw(&self) -> RawGaussianModel {
        RawGaussianModel {
            convention: self.convention,
            sigma_x: linalg::to_rows(&self.sigma_x),
            h0: linalg::to_rows(&self.h0),
            sigma_0: linalg::to_rows(&self.sigma_0),
            sensors: self
                .sensors
                .iter()
                .map(|s| RawSensor {
                    h: linalg::to_rows(&s.h),
                    sigma_k0: linalg::to_rows(&s.sigma_k0),
                    sigma_k: linalg::to_rows(&s.sigma_k),
                })
                .collect(),
            noise_covariance: None,
        }
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn n_x(&self) -> usize {
        self.sigma_x.nrows()
    }

    pub fn n_0(&self) -> usize {
        self.h0.nrows()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn sigma_x(&self) -> &Mat {
        &self.sigma_x
    }

    pub fn h0(&self) -> &Mat {
        &self.h0
    }

    pub fn sigma_0(&self) -> &Mat {
        &self.sigma_0
    }

    pub fn sensors(&self) -> &[GaussianSensor] {
        &self.sensors
    }

    pub fn sensor(&self, k: usize) -> &GaussianSensor {
        &self.sensors[k]
    }

    /// Covariance of (Z_0, Z_1..Z_K).
    pub fn noise_covariance(&self) -> &Mat {
        &self.noise_cov
    }

    /// Row indices of sensor `k` (0-based) inside the full noise vector.
    pub fn sensor_rows(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.sensors[k].h.nrows()
    }

    /// Row indices of (Z_0, Z_k for k in `sensors`), in that order.
    pub fn rows_for(&self, sensors: &[usize]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_0()).collect();
        for &k in sensors {
            idx.extend(self.sensor_rows(k));
        }
        idx
    }

    /// Stacked channel matrix [H_0; H_k for k in `sensors`].
    pub fn stacked_channel(&self, sensors: &[usize]) -> Mat {
        let rows: usize = self.n_0() + sensors.iter().map(|&k| self.sensors[k].h.nrows()).sum::<usize>();
        let mut h = Mat::zeros(rows, self.n_x());
        h.view_mut((0, 0), (self.n_0(), self.n_x())).copy_from(&self.h0);
        let mut r = self.n_0();
        for &k in sensors {
            let hk = &self.sensors[k].h;
            h.view_mut((r, 0), (hk.nrows(), self.n_x())).copy_from(hk);
            r += hk.nrows();
        }
        h
    }

    /// Full observation covariance of (Y_0, Y_1..Y_K) under the null hypothesis.
    pub fn observation_covariance(&self) -> Mat {
        let all: Vec<usize> = (0..self.num_sensors()).collect();
        let h = self.stacked_channel(&all);
        &h * &self.sigma_x * h.transpose() + &self.noise_cov
    }
}

/// Per-sensor matrices Ω_k with 0 ⪯ Ω_k ⪯ Σ_k⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSet {
    pub omegas: Vec<Vec<Vec<f64>>>,
}

impl OmegaSet {
    pub fn from_matrices(m: &[Mat]) -> Self {
        Self { omegas: m.iter().map(linalg::to_rows).collect() }
    }

    pub fn zeros(model: &GaussianNetworkModel) -> Self {
        let m: Vec<Mat> = model.sensors().iter().map(|s| Mat::zeros(s.h.nrows(), s.h.nrows())).collect();
        Self::from_matrices(&m)
    }

    /// Ω_k = Σ_k⁻¹ for every sensor.
    pub fn upper_corner(model: &GaussianNetworkModel) -> Self {
        let m: Vec<Mat> = model
            .sensors()
            .iter()
            .map(|s| linalg::inverse_spd(&s.sigma_k).expect("validated"))
            .collect();
        Self::from_matrices(&m)
    }

    pub fn scalars(values: &[f64]) -> Self {
        Self { omegas: values.iter().map(|&v| vec![vec![v]]).collect() }
    }

    /// Checks the box 0 ⪯ Ω_k ⪯ Σ_k⁻¹ against `model` and returns the matrices.
    pub fn matrices(&self, model: &GaussianNetworkModel) -> Result<Vec<Mat>> {
        if self.omegas.len() != model.num_sensors() {
            return Err(Error::DimensionMismatch(format!(
                "{} Omega matrices for {} sensors",
                self.omegas.len(),
                model.num_sensors()
            )));
        }
        self.omegas
            .iter()
            .enumerate()
            .map(|(k, rows)| {
                let s = model.sensor(k);
                let n = s.sigma_k.nrows();
                let om = linalg::from_rows(rows, n)
                    .and_then(|m| {
                        if m.nrows() == n {
                            Ok(m)
                        } else {
                            Err(Error::DimensionMismatch(format!("Omega_{} is not {n}x{n}", k + 1)))
                        }
                    })
                    .map_err(|e| Error::InvalidOmega { sensor: k + 1, reason: e.to_string() })?;
                validate_omega(&om, &s.sigma_k, k)?;
                Ok(om)
            })
            .collect()
    }
}

pub(crate) fn validate_omega(om: &Mat, sigma_k: &Mat, k: usize) -> Result<()> {
    let bad = |reason: &str| Error::InvalidOmega { sensor: k + 1, reason: reason.to_string() };
    if (om - om.transpose()).amax() > 1e-9 * om.amax().max(1.0) {
        return Err(bad("not symmetric"));
    }
    let upper = linalg::inverse_spd(sigma_k).ok_or_else(|| bad("sigma_k not invertible"))?;
    let scale = linalg::eig_range(&upper).1;
    if linalg::psd_margin(om, scale) < -PSD_TOL {
        return Err(bad("not positive semidefinite"));
    }
    if linalg::psd_margin(&(&upper - om), scale) < -PSD_TOL {
        return Err(bad("exceeds Sigma_k^-1"));
    }
    Ok(())
}
