//! Entropy-power bounds for scalar sources observed through Gaussian sensor noise
//! (real-valued convention, nats).

mod bounds;
mod density;

pub use bounds::*;
pub use density::*;
