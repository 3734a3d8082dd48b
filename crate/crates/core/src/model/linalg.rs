//! Small dense linear-algebra helpers on `nalgebra::DMatrix<f64>`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::PSD_TOL;

pub type Mat = DMatrix<f64>;

pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Mat> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry in row {i}")));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

fn asymmetry(m: &Mat) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Extreme eigenvalues (min, max) of the symmetric part of `m`.
pub fn eig_range(m: &Mat) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let e = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Symmetric with min eigenvalue above `PSD_TOL` times the spectral scale.
pub fn check_positive_definite(m: &Mat, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("`{name}` is not square")));
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    if asymmetry(m) > 1e-9 {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    let (lo, hi) = eig_range(m);
    if !(lo > PSD_TOL * hi.abs().max(f64::MIN_POSITIVE)) || hi <= 0.0 {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    Ok(())
}

/// Min eigenvalue of `m` relative to `scale`; negative values beyond `-PSD_TOL` mean not PSD.
pub fn psd_margin(m: &Mat, scale: f64) -> f64 {
    let (lo, _) = eig_range(m);
    lo / scale.max(f64::MIN_POSITIVE)
}

pub fn logdet_spd(m: &Mat) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let ch = symmetrize(m).cholesky()?;
    Some(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn inverse_spd(m: &Mat) -> Option<Mat> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    let inv = symmetrize(m).cholesky()?.inverse();
    Some(symmetrize(&inv))
}

/// log|I + A B| for symmetric positive definite `a` and symmetric PSD `b`,
/// evaluated as log|I + Lᵀ B L| with A = L Lᵀ.
pub fn logdet_i_plus_spd_product(a: &Mat, b: &Mat) -> Option<f64> {
    let l = symmetrize(a).cholesky()?.l();
    let n = a.nrows();
    let inner = Mat::identity(n, n) + l.transpose() * symmetrize(b) * &l;
    logdet_spd(&inner)
}

/// Principal submatrix on the index set `idx`.
pub fn principal(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn rows_of(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub fn is_diagonal(m: &Mat) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].abs() <= 1e-14 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let det: f64 = 2.0 - 0.25;
        assert!((logdet_spd(&m).unwrap() - det.ln()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            check_positive_definite(&m, "sigma_x"),
            Err(Error::NotPositiveDefinite("sigma_x".into()))
        );
    }

    #[test]
    fn i_plus_product_matches_direct_determinant() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 4.0]);
        let b = Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let direct = (Mat::identity(2, 2) + &a * &b).determinant().ln();
        assert!((logdet_i_plus_spd_product(&a, &b).unwrap() - direct).abs() < 1e-13);
    }
}
