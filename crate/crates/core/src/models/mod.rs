//! Asset models: exact multivariate Black-Scholes sampling, Euler-Maruyama
//! for Heston and Jacobi, and polynomial moments through generator matrices.

pub mod black_scholes;
pub mod expm;
pub mod generator;
pub mod sde;

pub use black_scholes::{gbm_sample_terminal, simulate_gbm_terminal, BlackScholesSpec};
pub use expm::expm;
pub use generator::{
    build_generator_bs, build_generator_poly, moment, GeneratorMatrix, GeneratorStructure, Polynomial,
    PolynomialDiffusion,
};
pub use sde::{
    euler_maruyama, euler_maruyama_rng, heston_step, jacobi_step, simulate_terminal, Gbm, HestonSpec, JacobiSpec,
    PathBatch, Sde, StochVolModel,
};

/// Any model the pricer understands.
#[derive(Clone, Debug)]
pub enum Model {
    BlackScholes(BlackScholesSpec),
    StochVol(StochVolModel),
}

impl Model {
    pub fn rate(&self) -> f64 {
        match self {
            Self::BlackScholes(s) => s.r,
            Self::StochVol(m) => m.rate(),
        }
    }

    /// Number of assets the payoff sees.
    pub fn n_assets(&self) -> usize {
        match self {
            Self::BlackScholes(s) => s.dim(),
            Self::StochVol(_) => 1,
        }
    }

    /// The polynomial diffusion in the model's state variables (prices for
    /// Black-Scholes, `(v, x)` otherwise).
    pub fn polynomial_diffusion(&self) -> PolynomialDiffusion {
        match self {
            Self::BlackScholes(s) => PolynomialDiffusion::black_scholes(s),
            Self::StochVol(StochVolModel::Heston(s)) => PolynomialDiffusion::heston(s),
            Self::StochVol(StochVolModel::Jacobi(s)) => PolynomialDiffusion::jacobi(s),
        }
    }
}
