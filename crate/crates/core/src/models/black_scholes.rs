use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::stream_rng;

// tolerance on negative Cholesky pivots of a semi-definite correlation
const PSD_TOL: f64 = 1e-10;

/// Correlated geometric Brownian motions
/// `dS_i = r S_i dt + sigma_i S_i dW_i`, `d<W_i, W_j> = rho_ij dt`.
#[derive(Clone, Debug)]
pub struct BlackScholesSpec {
    pub s0: Vec<f64>,
    pub sigma: Vec<f64>,
    pub corr: DMatrix<f64>,
    pub r: f64,
    chol: DMatrix<f64>,
}

impl BlackScholesSpec {
    pub fn new(s0: Vec<f64>, sigma: Vec<f64>, corr: DMatrix<f64>, r: f64) -> Result<Self> {
        let d = s0.len();
        if d == 0 {
            return Err(Error::InvalidInput("Black-Scholes model needs at least one asset".into()));
        }
        if sigma.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: sigma.len() });
        }
        if corr.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, actual: corr.nrows() });
        }
        if s0.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("initial prices must be positive".into()));
        }
        if sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("volatilities must be non-negative".into()));
        }
        if !r.is_finite() {
            return Err(Error::InvalidInput("rate must be finite".into()));
        }
        for i in 0..d {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("correlation diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-12 || corr[(i, j)].abs() > 1.0 + 1e-12 {
                    return Err(Error::InvalidInput(format!("correlation entry ({i},{j}) is invalid")));
                }
            }
        }
        let chol = semidefinite_cholesky(&corr)?;
        Ok(Self { s0, sigma, corr, r, chol })
    }

    /// Uncorrelated assets with common `s0` and `sigma`.
    pub fn uncorrelated(d: usize, s0: f64, sigma: f64, r: f64) -> Result<Self> {
        Self::new(vec![s0; d], vec![sigma; d], DMatrix::identity(d, d), r)
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    /// Lower-triangular `L` with `L L^T = corr`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `S_T^i = s0_i exp((r - sigma_i^2/2) T + sigma_i sqrt(T) (L z)_i)`.
    pub fn terminal_into(&self, t: f64, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let st = t.sqrt();
        for i in 0..d {
            let lz: f64 = (0..=i).map(|k| self.chol[(i, k)] * z[k]).sum();
            let s = self.sigma[i];
            out[i] = self.s0[i] * ((self.r - 0.5 * s * s) * t + s * st * lz).exp();
        }
    }
}

/// Cholesky factor of a positive semi-definite matrix; zero pivots give
/// zero columns.
fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -PSD_TOL {
            return Err(Error::InvalidInput("correlation matrix is not positive semi-definite".into()));
        }
        if d <= PSD_TOL {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    if (&l * l.transpose() - a).amax() > 1e-10 {
        return Err(Error::InvalidInput("correlation matrix is not positive semi-definite".into()));
    }
    Ok(l)
}

pub fn gbm_sample_terminal(spec: &BlackScholesSpec, t: f64, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; spec.dim()];
    spec.terminal_into(t, z, &mut out);
    out
}

/// `n` exact draws of `S_T`; path `i` uses stream `i` of `seed`.
pub fn simulate_gbm_terminal(spec: &BlackScholesSpec, t: f64, n: usize, seed: u64) -> Result<PointSet> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("maturity must be positive".into()));
    }
    let d = spec.dim();
    let (points, _) = PointSet::generate(
        d,
        n,
        || vec![0.0; d],
        |z, i, out| {
            let mut rng = stream_rng(seed, i as u64);
            for zk in z.iter_mut() {
                *zk = StandardNormal.sample(&mut rng);
            }
            spec.terminal_into(t, z, out);
            Ok(1.0)
        },
    )?;
    Ok(points)
}
