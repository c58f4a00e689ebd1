use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;

use super::oracle::{axpy, dot, norm, VandermondeOracle};
use super::{LsqSolution, RekResiduals, SolverKind};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SOLVER_STREAM};

pub const DEFAULT_REK_EPS: f64 = 1e-6;

// guards the relative residuals against c = 0
const MIN_COEFF_NORM: f64 = 1e-30;

#[derive(Clone, Copy, Debug)]
pub struct RekOptions {
    pub eps: f64,
    pub seed: u64,
    /// Defaults to `10^6 * min(N, n+1)`.
    pub max_iter: Option<u64>,
}

impl Default for RekOptions {
    fn default() -> Self {
        Self { eps: DEFAULT_REK_EPS, seed: 0, max_iter: None }
    }
}

/// Randomized extended Kaczmarz with default iteration cap.
pub fn solve_rek(oracle: &VandermondeOracle<'_>, f: &[f64], eps: f64, seed: u64) -> Result<LsqSolution> {
    solve_rek_with(oracle, f, RekOptions { eps, seed, max_iter: None })
}

/// Randomized extended Kaczmarz.
///
/// Starting from `c = 0`, `z = f`, every step draws a row `i` with
/// probability `||V(i,:)||^2 / ||V||_F^2` (uniformly when all rows have the
/// same norm) and a column `j` with probability `||V(:,j)||^2 / ||V||_F^2`,
/// then
///
/// ```text
/// z <- z - (V(:,j)^T z / ||V(:,j)||^2) V(:,j)
/// c <- c + (f_i - z_i - V(i,:) c) / ||V(i,:)||^2 V(i,:)^T
/// ```
///
/// where the row step uses `z_i` from before the column projection. Every
/// `8 min(N, n+1)` steps the iterate is accepted once both
/// `||V c - (f - z)||` and `||V^T z||` are at most `eps ||V||_F ||c||`.
///
/// Only one row, one column, `z` and `c` are held at any time; the column
/// norm pre-pass happens when the oracle is built.
pub fn solve_rek_with(oracle: &VandermondeOracle<'_>, f: &[f64], opts: RekOptions) -> Result<LsqSolution> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidInput("REK tolerance must be positive".into()));
    }
    let (n, m) = (oracle.nrows(), oracle.ncols());
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: f.len() });
    }
    let fro = oracle.frobenius_norm_sq().sqrt();
    if fro == 0.0 {
        return Err(Error::InvalidInput("design matrix is zero".into()));
    }
    let period = 8 * n.min(m) as u64;
    let max_iter = opts.max_iter.unwrap_or(1_000_000 * n.min(m) as u64);

    let mut rng = stream_rng(opts.seed, SOLVER_STREAM);
    let col_dist = WeightedAliasIndex::new(oracle.col_norms_sq().to_vec())
        .map_err(|e| Error::InvalidInput(format!("column norms: {e}")))?;
    let row_dist = match oracle.row_norms_sq() {
        Some(norms) => Some(
            WeightedAliasIndex::new(norms.to_vec())
                .map_err(|e| Error::InvalidInput(format!("row norms: {e}")))?,
        ),
        None => None,
    };

    let mut c = vec![0.0; m];
    let mut z = f.to_vec();
    let mut col = vec![0.0; n];
    let mut row = vec![0.0; m];
    let mut scratch = oracle.row_scratch();
    let mut last = RekResiduals { consistency: f64::INFINITY, orthogonality: f64::INFINITY };
    let mut converged = false;
    let mut k = 0u64;

    while k < max_iter {
        k += 1;
        let i = match &row_dist {
            Some(d) => d.sample(&mut rng),
            None => rng.random_range(0..n),
        };
        let j = col_dist.sample(&mut rng);
        let z_i = z[i];

        oracle.column_into(j, &mut col);
        let alpha = dot(&col, &z) / oracle.col_norms_sq()[j];
        axpy(-alpha, &col, &mut z);

        oracle.row_into(i, &mut scratch, &mut row);
        let step = (f[i] - z_i - dot(&row, &c)) / oracle.row_norm_sq(i);
        axpy(step, &row, &mut c);

        if k.is_multiple_of(period) {
            let (r1, r2) = oracle.kaczmarz_residuals(&c, &z, f);
            let denom = fro * norm(&c).max(MIN_COEFF_NORM);
            last = RekResiduals { consistency: r1 / denom, orthogonality: r2 / denom };
            if last.consistency <= opts.eps && last.orthogonality <= opts.eps {
                converged = true;
                break;
            }
        }
    }

    let (residual, grad) = oracle.residual_and_gradient(&c, f);
    Ok(LsqSolution {
        coeffs: c,
        residual_norm: norm(&residual),
        normal_residual: norm(&grad),
        solver: SolverKind::Rek,
        iterations: k as usize,
        kappa_estimate: None,
        flop_count: k * (n + m) as u64,
        converged,
        rank_deficient: false,
        rek_residuals: Some(last),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSet;
    use crate::sampling::sample_optimal;
    use crate::solvers::solve_qr;
    use nalgebra::DMatrix;

    #[test]
    fn consistent_square_system() {
        let o = VandermondeOracle::dense(DMatrix::identity(2, 2));
        let s = solve_rek(&o, &[1.0, 2.0], 1e-10, 1).unwrap();
        assert!(s.converged);
        assert!((s.coeffs[0] - 1.0).abs() < 1e-8 && (s.coeffs[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn inconsistent_system_reaches_least_squares() {
        let o = VandermondeOracle::dense(DMatrix::from_element(2, 1, 1.0));
        let s = solve_rek(&o, &[0.0, 2.0], 1e-10, 3).unwrap();
        assert!(s.converged);
        assert!((s.coeffs[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn weighted_vandermonde_matches_qr() {
        let basis = BasisSet::tensor_legendre(1, 9).unwrap();
        let batch = sample_optimal(&basis, 200, 21).unwrap();
        let f: Vec<f64> = batch.points.coord(0).iter().zip(&batch.weights).map(|(x, w)| w.sqrt() * (3.0 * x).exp()).collect();
        let dense = VandermondeOracle::assemble(&basis, &batch).unwrap();
        let implicit = VandermondeOracle::implicit(&basis, &batch).unwrap();
        let qr = solve_qr(&dense, &f).unwrap();
        let eps = 1e-8;
        let qn = norm(&qr.coeffs);
        for o in [&dense, &implicit] {
            let rek = solve_rek(o, &f, eps, 5).unwrap();
            assert!(rek.converged);
            let diff: Vec<f64> = rek.coeffs.iter().zip(&qr.coeffs).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) <= 10.0 * eps * qn, "diff {} vs {}", norm(&diff), qn);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let basis = BasisSet::tensor_legendre(2, 3).unwrap();
        let batch = sample_optimal(&basis, 300, 2).unwrap();
        let o = VandermondeOracle::implicit(&basis, &batch).unwrap();
        let f: Vec<f64> = (0..300).map(|i| (i as f64 * 0.1).sin()).collect();
        let a = solve_rek(&o, &f, 1e-6, 9).unwrap();
        let b = solve_rek(&o, &f, 1e-6, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let o = VandermondeOracle::dense(DMatrix::from_fn(30, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 + 1.0));
        let f: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let s = solve_rek_with(&o, &f, RekOptions { eps: 1e-14, seed: 1, max_iter: Some(64) }).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 64);
        let r = s.rek_residuals.unwrap();
        assert!(r.consistency.is_finite() && r.orthogonality.is_finite());
    }
}
