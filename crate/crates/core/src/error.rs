use thiserror::Error;

/// Errors produced by model validation and the region/bound computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(String),

    #[error("noise covariance violates the Z_0 Markov structure (residual {residual:.3e})")]
    MarkovStructureViolated { residual: f64 },

    #[error("convention mismatch: operation expects {expected}, model is {found}")]
    ConventionMismatch { expected: &'static str, found: &'static str },

    #[error("invalid Omega for sensor {sensor}: {reason}")]
    InvalidOmega { sensor: usize, reason: String },

    #[error("Omega for sensor {sensor} is singular but nonzero; test channel noise is unbounded in some directions")]
    OmegaOnBoundary { sensor: usize },

    #[error("gamma[{index}] = {value} outside [0, {upper}]")]
    GammaOutOfBox { index: usize, value: f64, upper: f64 },

    #[error("operation requires exactly one sensor, model has {0}")]
    KNotOne(usize),

    #[error("unsupported structure: {0}")]
    StructureUnsupported(String),

    #[error("{which} has total mass {sum}, expected 1")]
    MassNotOne { which: String, sum: f64 },

    #[error("{which} does not factorize as required (residual {residual:.3e})")]
    MarkovViolated { which: String, residual: f64 },

    #[error("P and Q disagree on the {which} marginal (residual {residual:.3e})")]
    MarginalMismatch { which: String, residual: f64 },

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("variable sets overlap")]
    OverlappingSets,

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("grid needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("auxiliary (W, Q) is not independent of the source tuple")]
    AuxIndependenceViolated,

    #[error("exponent {exponent} exceeds H(X|Y_0) = {entropy}")]
    ExponentExceedsEntropy { exponent: f64, entropy: f64 },

    #[error("{count} outcomes exceed the limit of {limit}")]
    TooManyOutcomes { count: u128, limit: u128 },

    #[error("alpha must be in (0, 1]")]
    AlphaZero,

    #[error("invalid rates: {0}")]
    InvalidRates(String),

    #[error("trials must be at least 1")]
    TrialsZero,

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("log argument {value} < 1; entropy-power evaluation is inaccurate")]
    LogArgumentBelowOne { value: f64 },

    #[error("exponent {exponent} is outside the domain of the bound")]
    ExponentOutOfDomain { exponent: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures of a numerical procedure rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged(_) | Error::LogArgumentBelowOne { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
