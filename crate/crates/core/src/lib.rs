//! Bayesian MMSE estimation for compressive sensing of block-sparse
//! Gaussian-mixture signals.
//!
//! - [`source`]: the mixture source and the `y = A x + n` measurement model.
//! - [`mmse`]: the exact posterior-mean estimator, the support-aware (genie)
//!   estimator and a brute-force quadrature oracle for tiny problems.
//! - [`replica`]: large-system MSE predictions from the decoupled AWGN
//!   channel fixed point.
//! - [`monte_carlo`]: seeded, parallel trials comparing the two.
//! - [`sweep`]: configuration parsing and sweep output used by the CLI.

pub mod error;
pub mod mmse;
pub mod monte_carlo;
pub mod replica;
pub mod source;
pub mod sweep;

pub use error::{Error, Result};
