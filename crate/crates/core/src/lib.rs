//! Monte Carlo with least squares (MCLS).
//!
//! An integral `I = E_mu[f]` is estimated by regressing `f` on a basis
//! `{phi_j}` with `phi_0 = 1` at `N` sample points and integrating the fit
//! exactly. With a single constant basis function this is plain Monte Carlo;
//! richer bases act as control variates and shrink the variance.
//!
//! The crate provides
//! * [`basis`]: tensor Legendre, monomial and Gram-Schmidt bases,
//! * [`sampling`]: plain and optimally weighted sample batches,
//! * [`solvers`]: QR, CG on the normal equations and randomized extended
//!   Kaczmarz (which never stores the design matrix),
//! * [`estimator`]: the MCLS estimate with variance and confidence interval,
//! * [`models`]: Black-Scholes, Heston and Jacobi dynamics, Euler-Maruyama
//!   and moment formulas through generator matrices,
//! * [`pricing`]: European option pricing on top of all of the above.

// `!(x > 0.0)` is deliberate: NaN has to fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod error;
pub mod estimator;
pub mod models;
pub mod normal;
pub mod points;
pub mod pricing;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub mod solvers;
