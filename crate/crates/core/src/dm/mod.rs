//! Discrete memoryless region: information measures, the subset bound, grid
//! search over test channels and the weakening check.

pub mod grid;
pub mod rw;
pub mod tensor;
pub mod theorem1;

pub use grid::{grid_search_dm_exponent, grid_size, GridSearchOptions, GridSearchResult, DEFAULT_GRID_BUDGET};
pub use rw::{rw_weakening_check, rw_weakening_check_joint, RwAuxiliary, RwReport, RwSubsetSlack};
pub use tensor::{binary_entropy, kl_divergence, JointPmfTensor, Var};
pub use theorem1::{ceo_distortion_equivalent, evaluate_theorem1_bound, DmBoundReport};
