//! Gaussian rate-exponent region: subset bounds, Fisher closed form, test
//! channels and max-min optimization of the exponent.

pub mod bound;
pub mod maxmin;
pub mod optimize;

pub use bound::{
    evaluate_scalar_bound, evaluate_vg_bound, fisher_closed_form, qbt_test_channel_covariance, vg_report,
    GammaVector, TestChannelNoise, VgBoundReport,
};
pub use optimize::{
    one_encoder_region, optimize_scalar_exponent, optimize_vg_exponent, scalar_centralized_exponent,
    OmegaStructure,
};
