//! Least-squares backends for `min_c ||V c - f||_2`.
//!
//! * [`solve_qr`]: Householder QR on the stored matrix, falling back to an
//!   SVD pseudo-inverse when the matrix is numerically rank deficient;
//! * [`solve_cg_normal`]: conjugate gradients on `V^T V c = V^T f`;
//! * [`solve_rek`]: randomized extended Kaczmarz, which touches one row and
//!   one column per step and works without storing `V`.
//!
//! [`select_solver`] picks between them from storability and `kappa_2(V)`.

mod cg;
mod oracle;
mod qr;
mod rek;

pub use cg::solve_cg_normal;
pub use oracle::{RowScratch, VandermondeOracle, DEFAULT_CACHE_BUDGET};
pub use qr::{estimate_condition, solve_qr, solve_with_factorization, QrFactorization};
pub use rek::{solve_rek, solve_rek_with, RekOptions, DEFAULT_REK_EPS};

use std::fmt;

/// Matrices with at most this many entries are stored.
pub const DEFAULT_STORABLE_LIMIT: u64 = 100_000_000;

/// Condition number up to which CG is preferred over QR.
pub const KAPPA_THRESHOLD: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Qr,
    CgNormal,
    Rek,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Qr => "qr",
            SolverKind::CgNormal => "cg-normal",
            SolverKind::Rek => "rek",
        })
    }
}

/// Residual measures of the extended Kaczmarz stopping test, both already
/// divided by `||V||_F ||c||`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RekResiduals {
    pub consistency: f64,
    pub orthogonality: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsqSolution {
    pub coeffs: Vec<f64>,
    /// `||V c - f||_2`.
    pub residual_norm: f64,
    /// `||V^T (V c - f)||_2`, the optimality certificate.
    pub normal_residual: f64,
    pub solver: SolverKind,
    pub iterations: usize,
    pub kappa_estimate: Option<f64>,
    pub flop_count: u64,
    pub converged: bool,
    pub rank_deficient: bool,
    pub rek_residuals: Option<RekResiduals>,
}

/// Backend choice: REK when `V` cannot be stored, otherwise CG for
/// `kappa <= 10` and QR above. A storable matrix without a condition
/// estimate goes to QR.
pub fn select_solver(storable: bool, kappa_estimate: Option<f64>) -> SolverKind {
    match (storable, kappa_estimate) {
        (false, _) => SolverKind::Rek,
        (true, Some(k)) if k <= KAPPA_THRESHOLD => SolverKind::CgNormal,
        (true, _) => SolverKind::Qr,
    }
}

/// Whether an `nrows x ncols` matrix fits under `limit` entries.
pub fn is_storable(nrows: usize, ncols: usize, limit: u64) -> bool {
    (nrows as u128) * (ncols as u128) <= limit as u128
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_scheme() {
        assert_eq!(select_solver(false, None), SolverKind::Rek);
        assert_eq!(select_solver(false, Some(1.0)), SolverKind::Rek);
        assert_eq!(select_solver(true, Some(3.2)), SolverKind::CgNormal);
        assert_eq!(select_solver(true, Some(10.0)), SolverKind::CgNormal);
        assert_eq!(select_solver(true, Some(5000.0)), SolverKind::Qr);
        assert_eq!(select_solver(true, Some(f64::INFINITY)), SolverKind::Qr);
    }

    #[test]
    fn storability_threshold() {
        assert!(is_storable(1_000_000, 100, DEFAULT_STORABLE_LIMIT));
        assert!(!is_storable(1_000_000, 252, DEFAULT_STORABLE_LIMIT));
        assert!(!is_storable(100_000, 3003, DEFAULT_STORABLE_LIMIT));
    }
}
