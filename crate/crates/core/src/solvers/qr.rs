use nalgebra::{DMatrix, DVector};

use super::oracle::{norm, VandermondeOracle};
use super::{LsqSolution, SolverKind};
use crate::error::{Error, Result};

// |R_jj| below this fraction of max |R_ii| marks rank deficiency
const RANK_TOL: f64 = 1e-12;

/// Householder QR of a stored design matrix, with `kappa_2` from the
/// singular values of `R`.
pub struct QrFactorization {
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
    kappa: f64,
    rank_deficient: bool,
}

impl QrFactorization {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let (n, m) = matrix.shape();
        if n < m {
            return Err(Error::InvalidInput(format!("QR needs N >= n+1, got {n} x {m}")));
        }
        let qr = matrix.clone().qr();
        let r = qr.r();
        let sv = r.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let kappa = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let rmax = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let rank_deficient = (0..m).any(|i| r[(i, i)].abs() <= RANK_TOL * rmax) || smin <= RANK_TOL * smax;
        Ok(Self { qr, r, kappa, rank_deficient })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }
}

/// `kappa_2(V) = sigma_max / sigma_min`, `+inf` when `sigma_min = 0`.
pub fn estimate_condition(oracle: &VandermondeOracle<'_>) -> Result<f64> {
    let m = oracle
        .dense_matrix()
        .ok_or_else(|| Error::InvalidInput("condition estimate needs a stored matrix".into()))?;
    Ok(QrFactorization::new(m)?.kappa())
}

pub fn solve_qr(oracle: &VandermondeOracle<'_>, f: &[f64]) -> Result<LsqSolution> {
    let m = oracle
        .dense_matrix()
        .ok_or_else(|| Error::InvalidInput("QR needs a stored matrix".into()))?;
    let fact = QrFactorization::new(m)?;
    solve_with_factorization(oracle, &fact, f)
}

pub fn solve_with_factorization(
    oracle: &VandermondeOracle<'_>,
    fact: &QrFactorization,
    f: &[f64],
) -> Result<LsqSolution> {
    let m = oracle.dense_matrix().expect("stored matrix");
    let (n, cols) = m.shape();
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: f.len() });
    }
    let rhs = DVector::from_column_slice(f);
    let coeffs: Vec<f64> = if fact.rank_deficient {
        // minimum-norm solution through the pseudo-inverse
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let sol = svd
            .solve(&rhs, RANK_TOL * smax)
            .map_err(|e| Error::InvalidInput(format!("pseudo-inverse failed: {e}")))?;
        sol.data.into()
    } else {
        let mut qtf = rhs.clone();
        fact.qr.q_tr_mul(&mut qtf);
        let top = qtf.rows(0, cols).into_owned();
        let r = fact.r.rows(0, cols).into_owned();
        let sol = r
            .solve_upper_triangular(&top)
            .ok_or_else(|| Error::InvalidInput("singular triangular factor".into()))?;
        sol.data.into()
    };
    let (residual, grad) = oracle.residual_and_gradient(&coeffs, f);
    let flops = 2 * (n as u64) * (cols as u64) * (cols as u64);
    Ok(LsqSolution {
        coeffs,
        residual_norm: norm(&residual),
        normal_residual: norm(&grad),
        solver: SolverKind::Qr,
        iterations: 0,
        kappa_estimate: Some(fact.kappa),
        flop_count: flops,
        converged: true,
        rank_deficient: fact.rank_deficient,
        rek_residuals: None,
    })
}
