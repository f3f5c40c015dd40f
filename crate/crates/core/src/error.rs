//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("empirical measure needs at least one atom")]
    EmptySupport,

    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("sum of weights {total} does not match declared mass {declared}")]
    MassMismatch { total: f64, declared: f64 },

    #[error("total mass must be positive, got {0}")]
    NonPositiveMass(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exact computation supports d=1 only, got d={0} (use the sliced estimator)")]
    UnsupportedDimension(usize),

    #[error("test function '{name}' is non-finite at support point {point:?}")]
    NonFiniteValue { name: String, point: Vec<f64> },

    #[error(
        "parabolicity violated at t={t}, x={x:?}: eigenvalue {eigenvalue} of 2a - sigma sigma^T \
         is below -{tolerance}"
    )]
    ParabolicityViolation {
        t: f64,
        x: Vec<f64>,
        eigenvalue: f64,
        tolerance: f64,
    },

    #[error("incompatible trajectories: {0}")]
    GridMismatch(String),

    #[error("runs are conditioned on different common-noise paths")]
    ConditioningMismatch,

    #[error("need at least 2 inner samples, got {0}")]
    InsufficientSamples(usize),

    #[error("kernel diffusion part present but its y-derivative is missing")]
    IncompleteDerivative,

    #[error("reference run too small: n_ref={n_ref} must be >= 8 * max(N) = {required}")]
    ReferenceQuality { n_ref: usize, required: usize },

    #[error("integrand bound violated: |Y| = {value} exceeds declared bound {bound}")]
    AssumptionViolation { value: f64, bound: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
