use super::oracle::{axpy, dot, norm, VandermondeOracle};
use super::{LsqSolution, SolverKind};
use crate::error::{Error, Result};

/// Conjugate gradients on the normal equations (CGLS form), stopping once
/// `||V^T (V c - f)|| <= tol ||V^T f||`.
///
/// Cost is booked as `2 N (n+1)` flops per iteration. If `max_iter` is
/// reached, the iterate with the smallest normal residual is returned with
/// `converged = false`.
pub fn solve_cg_normal(
    oracle: &VandermondeOracle<'_>,
    f: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LsqSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("CG tolerance must be positive".into()));
    }
    let (n, m) = (oracle.nrows(), oracle.ncols());
    if f.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: f.len() });
    }
    let per_iter = 2 * n as u64 * m as u64;

    let mut c = vec![0.0; m];
    let mut r = f.to_vec();
    let mut s = oracle.apply_transpose(&r);
    let s0 = norm(&s);
    let mut gamma = dot(&s, &s);
    let mut p = s.clone();
    let mut best = (s0, c.clone());
    let mut iterations = 0;
    let mut converged = s0 == 0.0;

    while !converged && iterations < max_iter {
        iterations += 1;
        let q = oracle.apply(&p);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        axpy(alpha, &p, &mut c);
        axpy(-alpha, &q, &mut r);
        s = oracle.apply_transpose(&r);
        let gamma_new = dot(&s, &s);
        let s_norm = gamma_new.sqrt();
        if s_norm < best.0 {
            best = (s_norm, c.clone());
        }
        if s_norm <= tol * s0 {
            converged = true;
            break;
        }
        let beta = gamma_new / gamma;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        gamma = gamma_new;
    }

    let coeffs = if converged { c } else { best.1 };
    let (residual, grad) = oracle.residual_and_gradient(&coeffs, f);
    Ok(LsqSolution {
        coeffs,
        residual_norm: norm(&residual),
        normal_residual: norm(&grad),
        solver: SolverKind::CgNormal,
        iterations,
        kappa_estimate: None,
        flop_count: per_iter * iterations as u64,
        converged,
        rank_deficient: false,
        rek_residuals: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn orthonormal_columns_converge_immediately() {
        let m = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let o = VandermondeOracle::dense(m);
        let s = solve_cg_normal(&o, &[1.0, 2.0, 3.0, 4.0], 1e-12, 50).unwrap();
        assert!(s.converged && s.iterations <= 2);
        assert!((s.coeffs[0] - 5.0).abs() < 1e-12 && (s.coeffs[1] + 1.0).abs() < 1e-12);
        assert_eq!(s.flop_count, 2 * 4 * 2 * s.iterations as u64);
    }

    #[test]
    fn orthogonal_rhs_gives_zero() {
        let m = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        let o = VandermondeOracle::dense(m);
        let s = solve_cg_normal(&o, &[1.0, -1.0, 5.0], 1e-10, 10).unwrap();
        assert_eq!(s.coeffs, vec![0.0]);
        assert!(s.converged);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let m = DMatrix::from_fn(40, 8, |i, j| ((i + 1) as f64 / 40.0).powi(j as i32));
        let o = VandermondeOracle::dense(m);
        let f: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let s = solve_cg_normal(&o, &f, 1e-14, 2).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 2);
        assert!(solve_cg_normal(&o, &f, 0.0, 2).is_err());
    }
}
