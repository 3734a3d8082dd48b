//! Finite-blocklength layer: exact Neyman-Pearson optimum, pushforwards of
//! symbolwise encoders, the divergence identity and a Monte Carlo detector.

pub mod exact;
pub mod np;
pub mod sim;

pub use exact::{
    build_np_instance, divergence_identity_check, divergence_identity_check_pmfs, empirical_exponent_curve,
    log_sum_beta_bound, BinningSpec, CurvePoint, DivergenceCheck, EncoderSpec, ExponentCurve,
};
pub use np::{np_oracle, np_solve, NpInstance, NpSolution, DEFAULT_OUTCOME_LIMIT};
pub use sim::{
    ci_radius, equiprobable_thresholds, qbt_simulate, GaussianSimModel, SimConfig, SimResult, SimSource, CI_Z,
    DEFAULT_TYPICALITY_CONSTANT,
};
