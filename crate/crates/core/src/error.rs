use thiserror::Error;

/// Errors raised by the estimator and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("point outside the basis domain: coordinate {coordinate} = {value}")]
    Domain { coordinate: usize, value: f64 },

    #[error("moment Gram matrix is not positive definite at pivot {pivot} (residual norm^2 = {residual:e})")]
    IllConditionedMoments { pivot: usize, residual: f64 },

    #[error("rejection sampler stuck after {attempts} attempts (acceptance rate {acceptance_rate:e})")]
    SamplerStuck { attempts: u64, acceptance_rate: f64 },

    #[error("not enough degrees of freedom: N = {n_samples} must exceed n + 1 = {n_basis}")]
    DegreesOfFreedom { n_samples: usize, n_basis: usize },

    #[error("integrand returned a non-finite value at sample {index}")]
    NonFiniteIntegrand { index: usize },

    #[error("non-finite state in time step {step}")]
    BlowUp { step: usize },

    #[error("matrix exponential produced non-finite entries")]
    MatrixExponential,

    #[error("price {price} lies outside the no-arbitrage band ({lower}, {upper})")]
    NoImpliedVol { price: f64, lower: f64, upper: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
