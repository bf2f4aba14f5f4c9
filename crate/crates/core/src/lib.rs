//! Sharp large deviation estimates for scalar projections of random points
//! on ℓ_p^n spheres, with importance-sampling and Monte Carlo estimators for
//! cross-validation.

// `!(x > 0.0)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clt;
pub mod dual;
pub mod error;
pub mod estimators;
pub mod pgauss;
pub mod prefactor;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use pgauss::{LambdaEval, PExponent, PGauss};
