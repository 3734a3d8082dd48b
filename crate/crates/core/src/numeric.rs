//! Scalar quadrature shared by the Gaussian discretization and the entropy-power code.

use crate::error::{Error, Result};

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut failed = false;
    let v = step(f, a, b, fa, fm, fb, whole, tol, max_depth, &mut failed);
    if failed || !v.is_finite() {
        return Err(Error::QuadratureNotConverged(format!(
            "adaptive Simpson on [{a}, {b}] did not reach tolerance {tol:e}"
        )));
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    failed: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    if depth == 0 {
        *failed = true;
        return left + right;
    }
    step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, failed)
        + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, failed)
}

/// Splits `[a, b]` into `pieces` equal panels and integrates each adaptively,
/// which keeps narrow features from being missed by the first Simpson sample.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize, tol: f64) -> Result<f64> {
    let h = (b - a) / pieces as f64;
    let mut acc = 0.0;
    for i in 0..pieces {
        let lo = a + h * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + h };
        acc += adaptive_simpson(f, lo, hi, tol / pieces as f64, 50)?;
    }
    Ok(acc)
}
