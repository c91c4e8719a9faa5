//! Sensitivity of black-box models to input perturbations, measured with
//! generalized polynomial chaos surrogates and Sobol indices.
//!
//! The pipeline samples perturbation parameters with a Latin hypercube
//! ([`randomspace`]), applies them to a fixed input ([`perturb`]), queries
//! the model ([`adapter`]), fits an orthonormal Jacobi expansion to the
//! (logit) outputs ([`basis`], [`surrogate`]) and splits the output variance
//! over every subset of parameters ([`sobol`]).
//!
//! The numerical modules are generic over [`Real`] (`f32`, `f64`); the
//! aliases below fix the scalar to `f64`, which is what the pipeline uses.

pub mod adapter;
pub mod basis;
pub mod benchmarks;
pub mod error;
pub mod linalg;
pub mod perturb;
pub mod randomspace;
pub mod scalar;
pub mod sobol;
pub mod surrogate;

pub use error::{Error, EvaluatorFailure, Result};
pub use scalar::Real;

pub type JacobiParams64 = basis::JacobiParams<f64>;
pub type BasisSet64 = basis::BasisSet<f64>;
pub type RandomParameter64 = randomspace::RandomParameter<f64>;
pub type ParameterSpace64 = randomspace::ParameterSpace<f64>;
pub type SampleMatrix64 = randomspace::SampleMatrix<f64>;
pub type Surrogate64 = surrogate::Surrogate<f64>;
pub type SobolReport64 = sobol::SobolReport<f64>;

pub type BasisSet32 = basis::BasisSet<f32>;
pub type ParameterSpace32 = randomspace::ParameterSpace<f32>;
pub type Surrogate32 = surrogate::Surrogate<f32>;
pub type SobolReport32 = sobol::SobolReport<f32>;
