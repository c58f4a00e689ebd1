//! The MCLS estimate: regress `f` on the basis, integrate the fit exactly.

use rayon::prelude::*;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::normal;
use crate::sampling::WeightedSampleBatch;
use crate::solvers::{
    is_storable, select_solver, solve_cg_normal, solve_rek_with, solve_with_factorization, LsqSolution, QrFactorization, RekOptions,
    SolverKind, VandermondeOracle, DEFAULT_CACHE_BUDGET, DEFAULT_REK_EPS, DEFAULT_STORABLE_LIMIT,
};

/// Exact integrals `m_j = int phi_j dmu`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralTable {
    values: Vec<f64>,
}

impl IntegralTable {
    /// `(1, 0, ..., 0)`: an orthonormal basis with `phi_0 = 1`.
    pub fn orthonormal(size: usize) -> Self {
        let mut values = vec![0.0; size];
        if let Some(v) = values.first_mut() {
            *v = 1.0;
        }
        Self { values }
    }

    pub fn from_moments(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            None => Err(Error::InvalidInput("empty integral table".into())),
            Some(&m0) if (m0 - 1.0).abs() > 1e-12 => {
                Err(Error::InvalidInput(format!("m_0 must be 1 for a probability measure, got {m0}")))
            }
            _ if values.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("non-finite entry in integral table".into()))
            }
            _ => Ok(Self { values }),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Auto,
    Qr,
    Cg,
    Rek,
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "qr" => Ok(Self::Qr),
            "cg" | "cg-normal" => Ok(Self::Cg),
            "rek" => Ok(Self::Rek),
            other => Err(Error::InvalidInput(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub choice: SolverChoice,
    /// Matrices with more than this many entries are never materialized by `Auto`.
    pub storable_limit: u64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub rek_eps: f64,
    pub rek_seed: u64,
    pub rek_max_iter: Option<u64>,
    /// Memory allowed for the REK column cache.
    pub cache_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            choice: SolverChoice::Auto,
            storable_limit: DEFAULT_STORABLE_LIMIT,
            cg_tol: 1e-10,
            cg_max_iter: 10_000,
            rek_eps: DEFAULT_REK_EPS,
            rek_seed: 0,
            rek_max_iter: None,
            cache_budget: DEFAULT_CACHE_BUDGET,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MclsEstimate {
    pub value: f64,
    pub sigma_ls: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
    /// Basis size minus one.
    pub n: usize,
    pub solution: LsqSolution,
    pub flop_count: u64,
}

impl MclsEstimate {
    pub fn coeffs(&self) -> &[f64] {
        &self.solution.coeffs
    }

    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Evaluates `f` at every point of the batch (in parallel) and forms the
/// MCLS estimate.
pub fn mcls_estimate<F>(
    f: F,
    basis: &BasisSet,
    batch: &WeightedSampleBatch,
    table: &IntegralTable,
    config: &SolverConfig,
) -> Result<MclsEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values = evaluate_integrand(&f, batch);
    mcls_estimate_values(&values, basis, batch, table, config)
}

/// `f(x_i)` for every sample, in order.
pub fn evaluate_integrand<F>(f: &F, batch: &WeightedSampleBatch) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = batch.dim();
    (0..batch.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; dim],
            |x, i| {
                batch.points.point_into(i, x);
                f(x)
            },
        )
        .collect()
}

/// MCLS estimate from cached integrand values `f_values[i] = f(x_i)`.
pub fn mcls_estimate_values(
    f_values: &[f64],
    basis: &BasisSet,
    batch: &WeightedSampleBatch,
    table: &IntegralTable,
    config: &SolverConfig,
) -> Result<MclsEstimate> {
    let (n_samples, size) = (batch.len(), basis.size());
    if f_values.len() != n_samples {
        return Err(Error::DimensionMismatch { expected: n_samples, actual: f_values.len() });
    }
    if table.len() != size {
        return Err(Error::DimensionMismatch { expected: size, actual: table.len() });
    }
    if n_samples <= size {
        return Err(Error::DegreesOfFreedom { n_samples, n_basis: size });
    }
    if let Some(index) = f_values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIntegrand { index });
    }
    let rhs: Vec<f64> = f_values.iter().zip(&batch.weights).map(|(f, w)| w.sqrt() * f).collect();

    let storable = is_storable(n_samples, size, config.storable_limit);
    let materialize = match config.choice {
        SolverChoice::Auto => storable,
        SolverChoice::Qr => true,
        SolverChoice::Cg => storable,
        SolverChoice::Rek => false,
    };
    let oracle = if materialize {
        VandermondeOracle::assemble(basis, batch)?
    } else {
        VandermondeOracle::implicit_with_budget(basis, batch, config.cache_budget)?
    };

    let rek = |oracle: &VandermondeOracle<'_>| {
        let opts = RekOptions { eps: config.rek_eps, seed: config.rek_seed, max_iter: config.rek_max_iter };
        solve_rek_with(oracle, &rhs, opts)
    };
    let solution = match config.choice {
        SolverChoice::Rek => rek(&oracle)?,
        SolverChoice::Cg => solve_cg_normal(&oracle, &rhs, config.cg_tol, config.cg_max_iter)?,
        SolverChoice::Qr => {
            let fact = QrFactorization::new(oracle.dense_matrix().expect("materialized"))?;
            solve_with_factorization(&oracle, &fact, &rhs)?
        }
        SolverChoice::Auto if !storable => rek(&oracle)?,
        SolverChoice::Auto => {
            let fact = QrFactorization::new(oracle.dense_matrix().expect("materialized"))?;
            match select_solver(true, Some(fact.kappa())) {
                SolverKind::CgNormal => {
                    let mut s = solve_cg_normal(&oracle, &rhs, config.cg_tol, config.cg_max_iter)?;
                    s.kappa_estimate = Some(fact.kappa());
                    s
                }
                _ => solve_with_factorization(&oracle, &fact, &rhs)?,
            }
        }
    };

    let value: f64 = solution.coeffs.iter().zip(table.values()).map(|(c, m)| c * m).sum();

    // sqrt(w_i) (p_i - f_i); the variance needs w_i^2 (p_i - f_i)^2
    let fit = oracle.apply(&solution.coeffs);
    let sum_sq: f64 = fit
        .iter()
        .zip(&rhs)
        .zip(&batch.weights)
        .map(|((p, f), w)| {
            let r = p - f;
            w * r * r
        })
        .sum();
    let dof = (n_samples - size) as f64;
    let sigma_ls = (sum_sq / dof).sqrt();
    let (ci_low, ci_high) = confidence_interval(value, sigma_ls, n_samples, 0.95);
    let flop_count = solution.flop_count;
    Ok(MclsEstimate { value, sigma_ls, ci_low, ci_high, n_samples, n: size - 1, solution, flop_count })
}

/// `sigma_LS^2 = sum_i w_i^2 (f_i - p_i)^2 / (N - n - 1)` where
/// `residuals[i] = f_i - p_i` (unweighted).
pub fn variance_estimate(residuals: &[f64], weights: &[f64], n_samples: usize, n: usize) -> Result<f64> {
    if n_samples <= n + 1 {
        return Err(Error::DegreesOfFreedom { n_samples, n_basis: n + 1 });
    }
    if residuals.len() != n_samples || weights.len() != n_samples {
        return Err(Error::DimensionMismatch {
            expected: n_samples,
            actual: residuals.len().min(weights.len()),
        });
    }
    let s: f64 = residuals.iter().zip(weights).map(|(r, w)| (w * r) * (w * r)).sum();
    Ok(s / (n_samples - n - 1) as f64)
}

/// Two-sided normal quantile; exactly 1.96 at level 0.95.
pub fn z_for_level(level: f64) -> f64 {
    if level == 0.95 {
        1.96
    } else {
        normal::inv_cdf(0.5 * (1.0 + level))
    }
}

/// `value -/+ z sigma / sqrt(N)`.
pub fn confidence_interval(value: f64, sigma_ls: f64, n_samples: usize, level: f64) -> (f64, f64) {
    let h = z_for_level(level) * sigma_ls / (n_samples as f64).sqrt();
    (value - h, value + h)
}

/// MC-over-MCLS error ratio at equal cost: `e0 / (en sqrt(1 + (Cm/Cf) n))`.
pub fn error_ratio(e0: f64, en: f64, n: usize, cf: f64, cm: f64) -> f64 {
    e0 / (en * (1.0 + (cm / cf) * n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_optimal, sample_plain, UniformCube};

    fn plain(n: usize, seed: u64) -> WeightedSampleBatch {
        sample_plain(&UniformCube { dim: 1 }, n, seed).unwrap()
    }

    #[test]
    fn degree_zero_is_plain_mc() {
        let batch = plain(1000, 1);
        let basis = BasisSet::tensor_legendre(1, 0).unwrap();
        let f = |x: &[f64]| (3.0 * x[0]).exp();
        let est = mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(1), &SolverConfig::default()).unwrap();
        let vals = evaluate_integrand(&f, &batch);
        let mean = vals.iter().sum::<f64>() / 1000.0;
        assert!((est.value - mean).abs() <= 4.0 * f64::EPSILON * 1000.0 * mean.abs());
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((est.sigma_ls.powi(2) / var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exact_on_span() {
        let basis = BasisSet::tensor_legendre(2, 3).unwrap();
        let batch = sample_plain(&UniformCube { dim: 2 }, 50, 3).unwrap();
        // int over [0,1]^2 of 1 + x y^2 - x^3 = 1 + 1/6 - 1/4
        let f = |x: &[f64]| 1.0 + x[0] * x[1] * x[1] - x[0].powi(3);
        for choice in [SolverChoice::Qr, SolverChoice::Cg, SolverChoice::Rek, SolverChoice::Auto] {
            let cfg = SolverConfig { choice, rek_eps: 1e-10, cg_tol: 1e-13, ..Default::default() };
            let est = mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(basis.size()), &cfg).unwrap();
            assert!((est.value - (1.0 + 1.0 / 6.0 - 0.25)).abs() < 1e-8, "{choice:?}: {}", est.value);
            assert!(est.sigma_ls < 1e-8);
        }
    }

    #[test]
    fn sin_beats_mc_by_two_orders() {
        let batch = plain(10_000, 7);
        let basis = BasisSet::tensor_legendre(1, 5).unwrap();
        let exact = 1.0 - 1f64.cos();
        let f = |x: &[f64]| x[0].sin();
        let est = mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(6), &SolverConfig::default()).unwrap();
        let mc = evaluate_integrand(&f, &batch).iter().sum::<f64>() / 10_000.0;
        assert!((est.value - exact).abs() * 100.0 <= (mc - exact).abs());
    }

    #[test]
    fn weighted_batch_estimates() {
        let basis = BasisSet::tensor_legendre(2, 4).unwrap();
        let batch = sample_optimal(&basis, 2000, 11).unwrap();
        let f = |x: &[f64]| (x[0] + 2.0 * x[1]).cos();
        // (cos 1 + cos 2 - cos 3 - 1) / 2 by antiderivative
        let exact = (-(3f64).cos() + 2f64.cos() + 1f64.cos() - 1.0) / 2.0;
        let est = mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(basis.size()), &SolverConfig::default())
            .unwrap();
        assert!((est.value - exact).abs() < 5.0 * est.sigma_ls / (2000f64).sqrt() + 1e-12);
        assert!(est.ci_low <= est.value && est.value <= est.ci_high);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let batch = plain(20, 2);
        let basis = BasisSet::tensor_legendre(1, 1).unwrap();
        let first_big = (0..20).find(|&i| batch.points.get(i, 0) > 0.5).unwrap();
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { x[0] };
        let err = mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(2), &SolverConfig::default());
        assert!(matches!(err, Err(Error::NonFiniteIntegrand { index }) if index == first_big));
    }

    #[test]
    fn too_few_samples() {
        let batch = plain(3, 2);
        let basis = BasisSet::tensor_legendre(1, 2).unwrap();
        let err = mcls_estimate(|x| x[0], &basis, &batch, &IntegralTable::orthonormal(3), &SolverConfig::default());
        assert!(matches!(err, Err(Error::DegreesOfFreedom { .. })));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_estimate(&[0.0; 5], &[1.0; 5], 5, 1).unwrap(), 0.0);
        let (r, w, n_s, n) = (0.3, 2.0, 10, 2);
        let v = variance_estimate(&[r; 10], &[w; 10], n_s, n).unwrap();
        assert!((v - w * w * r * r * 10.0 / 7.0).abs() < 1e-14);
        assert!(matches!(variance_estimate(&[0.0; 3], &[1.0; 3], 3, 2), Err(Error::DegreesOfFreedom { .. })));
    }

    #[test]
    fn interval_examples() {
        assert_eq!(confidence_interval(2.0, 0.0, 10, 0.95), (2.0, 2.0));
        let (lo, hi) = confidence_interval(1.0, 1.0, 10_000, 0.95);
        assert!((lo - 0.9804).abs() < 1e-15 && (hi - 1.0196).abs() < 1e-15);
        let w1 = confidence_interval(0.0, 1.0, 100, 0.95);
        let w4 = confidence_interval(0.0, 1.0, 400, 0.95);
        assert!(((w1.1 - w1.0) / (w4.1 - w4.0) - 2.0).abs() < 1e-14);
        assert!((z_for_level(0.99) - 2.575_829_303_548_900_4).abs() < 1e-12);
    }

    #[test]
    fn error_ratio_examples() {
        assert_eq!(error_ratio(0.5, 0.5, 0, 1.0, 3.0), 1.0);
        assert!((error_ratio(1.0, 0.01, 99, 2.0, 2.0) - 10.0).abs() < 1e-12);
        assert!(error_ratio(1.0, 0.1, 10_000, 1.0, 1.0) < error_ratio(1.0, 0.1, 10, 1.0, 1.0));
    }
}
