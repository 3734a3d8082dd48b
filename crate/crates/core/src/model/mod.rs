//! Domain types shared by every computation: Gaussian network models,
//! discrete instances, subsets of sensors and matrix helpers.

pub mod discrete;
pub mod gaussian;
pub mod linalg;
pub mod subset;

pub use discrete::{Alphabets, DiscreteHTInstance, HtPmfs, RawDiscreteInstance, TestChannelFamily};
pub use gaussian::{
    gaussian_entropy, Convention, GaussianNetworkModel, GaussianSensor, OmegaSet, RawGaussianModel, RawSensor,
};
pub use linalg::Mat;
pub use subset::{RateExponentPoint, SubsetMask};
