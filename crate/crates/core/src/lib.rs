//! Rate-exponent regions for distributed hypothesis testing against
//! conditional independence: Gaussian and discrete memoryless models,
//! finite-length Neyman-Pearson checks and entropy-power bounds.

// `!(x >= 0.0)` is deliberate: it rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dm;
pub mod ep;
pub mod error;
pub mod model;
pub mod numeric;
pub mod qbt;
pub mod vg;

pub use error::{Error, Result};
pub use model::*;

/// Relative eigenvalue tolerance for positive (semi)definiteness checks.
pub const PSD_TOL: f64 = 1e-9;
/// Absolute tolerance for probability mass and factorization residuals.
pub const FACTOR_TOL: f64 = 1e-10;
/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: &str = "1";
