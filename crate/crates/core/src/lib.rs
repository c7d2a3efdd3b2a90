//! Recovery of signals from compressed measurements corrupted by sparse
//! outliers, under a generator-network prior.
//!
//! The measurement model is `y = M x + e + eta` with `x = G(z)` for a
//! layered generator `G: R^k -> R^n`, a dense Gaussian noise vector `eta`,
//! and an l-sparse gross-error vector `e`. Recovery minimizes
//! `||M G(z) - y||_1` (linearized ADMM) or its squared/l2 variants
//! (gradient descent), and the [`theory`] module certifies the rank and
//! separation conditions under which exact outlier rejection is guaranteed.

pub mod error;
pub mod experiment;
pub mod generator;
pub mod numerics;
pub mod sensing;
pub mod solvers;
pub mod theory;

pub use error::CoreError;
pub use generator::{Activation, GeneratorNet, Layer};
pub use nalgebra::{DMatrix, DVector};
pub use sensing::{Observation, OutlierSpec, SensingModel, SignMode};
pub use solvers::{AdmmConfig, GdConfig, Objective, SolveResult, SolverKind, StepRule};

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
