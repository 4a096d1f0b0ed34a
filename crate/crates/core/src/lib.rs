//! Black-box hyperparameter search: mixed parameter spaces, a Gaussian
//! process surrogate with expected improvement, random/grid/Bayesian
//! strategies, and the run-comparison statistics.

pub mod evalstat;
pub mod gp;
pub mod linalg;
pub mod scalar;
pub mod space;
pub mod strategies;

use rand::SeedableRng;

pub use scalar::Scalar;
pub use space::{Configuration, Domain, ParamDef, ParamSpace, ParamValue, Violation};
pub use strategies::{run_loop, BayesOptions, EvalError, Observation, StrategyKind, StrategyState, Trace};

/// Portable seeded random stream used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

pub type GpModel64 = gp::GpModel<f64>;
pub type GpModel32 = gp::GpModel<f32>;
pub type KernelParams64 = gp::KernelParams<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
