//! Families of basis functions `{phi_0, ..., phi_n}` with `phi_0 = 1`.
//!
//! Three kinds are supported: tensorized Legendre polynomials orthonormal on
//! the unit cube, raw monomials, and monomials orthonormalized against a
//! moment functional by Gram-Schmidt.

mod gram_schmidt;
pub mod legendre;
mod multi_index;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::points::PointSet;

pub use gram_schmidt::{gram_schmidt, InnerProductOracle, DEFAULT_ORTHOGONALITY_TOL};
pub use multi_index::{
    count_multi_indices, enumerate_multi_indices, enumerate_prefix, MultiIndex, MAX_ENUMERATION,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// Products of shifted, normalized Legendre polynomials on `[0,1]^d`.
    TensorLegendre,
    Monomial,
    /// `phi = T m(x)` for the monomial vector `m` and a lower-triangular `T`.
    GramSchmidt,
}

#[derive(Clone, Debug)]
pub struct BasisSet {
    dim: usize,
    kind: BasisKind,
    indices: Vec<MultiIndex>,
    max_degree: u32,
    transform: Option<DMatrix<f64>>,
    // flattened supports of the indices: support[offsets[j]..offsets[j+1]]
    offsets: Vec<usize>,
    support: Vec<(usize, u32)>,
}

impl BasisSet {
    fn from_indices(
        dim: usize,
        kind: BasisKind,
        indices: Vec<MultiIndex>,
        transform: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if indices.is_empty() || !indices[0].is_zero() {
            return Err(Error::InvalidInput("basis must start with the constant function".into()));
        }
        let max_degree = indices.iter().map(MultiIndex::total_degree).max().unwrap_or(0);
        let mut offsets = Vec::with_capacity(indices.len() + 1);
        let mut support = Vec::new();
        offsets.push(0);
        for idx in &indices {
            if idx.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: idx.dim() });
            }
            support.extend(idx.support());
            offsets.push(support.len());
        }
        Ok(Self { dim, kind, indices, max_degree, transform, offsets, support })
    }

    /// Tensor-product Legendre basis of total degree `<= degree` on `[0,1]^dim`.
    pub fn tensor_legendre(dim: usize, degree: u32) -> Result<Self> {
        Self::from_indices(dim, BasisKind::TensorLegendre, enumerate_multi_indices(dim, degree)?, None)
    }

    /// First `size` tensor-Legendre functions in graded order.
    pub fn tensor_legendre_with_size(dim: usize, size: usize) -> Result<Self> {
        Self::from_indices(dim, BasisKind::TensorLegendre, enumerate_prefix(dim, size)?, None)
    }

    pub fn monomial(dim: usize, degree: u32) -> Result<Self> {
        Self::from_indices(dim, BasisKind::Monomial, enumerate_multi_indices(dim, degree)?, None)
    }

    pub(crate) fn with_transform(raw: &BasisSet, transform: DMatrix<f64>) -> Result<Self> {
        Self::from_indices(raw.dim, BasisKind::GramSchmidt, raw.indices.clone(), Some(transform))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Number of functions, `n + 1`.
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    /// Index of the last function, `n`.
    pub fn n(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Change of basis from monomials, for Gram-Schmidt bases.
    pub fn transform(&self) -> Option<&DMatrix<f64>> {
        self.transform.as_ref()
    }

    pub(crate) fn support_of(&self, j: usize) -> &[(usize, u32)] {
        &self.support[self.offsets[j]..self.offsets[j + 1]]
    }

    /// Checks that `x` lies in the domain of the basis.
    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        for (k, &v) in x.iter().enumerate() {
            let ok = match self.kind {
                BasisKind::TensorLegendre => (0.0..=1.0).contains(&v),
                _ => v.is_finite(),
            };
            if !ok {
                return Err(Error::Domain { coordinate: k, value: v });
            }
        }
        Ok(())
    }

    /// Reusable evaluator holding the scratch space for row evaluation.
    pub fn row_evaluator(&self) -> RowEvaluator<'_> {
        let width = self.max_degree as usize + 1;
        RowEvaluator {
            basis: self,
            table: vec![0.0; self.dim * width],
            raw: vec![0.0; if self.transform.is_some() { self.size() } else { 0 }],
        }
    }

    /// `(phi_0(x), ..., phi_n(x))`, one row of the design matrix.
    pub fn eval_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.row_evaluator().eval(x, &mut out)?;
        Ok(out)
    }

    /// Value of the tensor-Legendre function at position `j` of the basis.
    pub fn eval_legendre_tensor(&self, j: usize, x: &[f64]) -> Result<f64> {
        if self.kind != BasisKind::TensorLegendre {
            return Err(Error::InvalidInput("basis is not tensor-Legendre".into()));
        }
        self.check_domain(x)?;
        Ok(self.support_of(j).iter().map(|&(k, a)| legendre::shifted_legendre(a, x[k])).product())
    }

    /// Evaluates `phi_j` at every point of `points` into `out`. Domain
    /// membership of the points is assumed to have been checked.
    pub fn eval_column(&self, j: usize, points: &PointSet, out: &mut [f64]) {
        debug_assert_eq!(out.len(), points.len());
        match self.kind {
            BasisKind::TensorLegendre => {
                out.fill(1.0);
                for &(k, a) in self.support_of(j) {
                    for (o, &x) in out.iter_mut().zip(points.coord(k)) {
                        *o *= legendre::shifted_legendre(a, x);
                    }
                }
            }
            BasisKind::Monomial => {
                out.fill(1.0);
                for &(k, a) in self.support_of(j) {
                    for (o, &x) in out.iter_mut().zip(points.coord(k)) {
                        *o *= x.powi(a as i32);
                    }
                }
            }
            BasisKind::GramSchmidt => {
                let t = self.transform.as_ref().expect("Gram-Schmidt basis carries a transform");
                out.fill(0.0);
                let mut col = vec![0.0; out.len()];
                for m in 0..=j {
                    let coef = t[(j, m)];
                    if coef == 0.0 {
                        continue;
                    }
                    col.fill(1.0);
                    for &(k, a) in self.support_of(m) {
                        for (o, &x) in col.iter_mut().zip(points.coord(k)) {
                            *o *= x.powi(a as i32);
                        }
                    }
                    for (o, c) in out.iter_mut().zip(&col) {
                        *o += coef * c;
                    }
                }
            }
        }
    }
}

/// Evaluates basis rows without allocating.
pub struct RowEvaluator<'a> {
    basis: &'a BasisSet,
    table: Vec<f64>,
    raw: Vec<f64>,
}

impl RowEvaluator<'_> {
    pub fn basis(&self) -> &BasisSet {
        self.basis
    }

    /// Writes `phi_j(x)` into `out[j]`.
    pub fn eval(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.basis.check_domain(x)?;
        self.eval_unchecked(x, out);
        Ok(())
    }

    /// As [`eval`](Self::eval) without the domain check.
    pub fn eval_unchecked(&mut self, x: &[f64], out: &mut [f64]) {
        let b = self.basis;
        let width = b.max_degree as usize + 1;
        for (k, &xk) in x.iter().enumerate() {
            let row = &mut self.table[k * width..(k + 1) * width];
            match b.kind {
                BasisKind::TensorLegendre => legendre::shifted_legendre_all(xk, row),
                BasisKind::Monomial | BasisKind::GramSchmidt => {
                    let mut p = 1.0;
                    for v in row.iter_mut() {
                        *v = p;
                        p *= xk;
                    }
                }
            }
        }
        let target: &mut [f64] = if b.transform.is_some() { &mut self.raw } else { out };
        for (j, t) in target.iter_mut().enumerate() {
            let mut v = 1.0;
            for &(k, a) in b.support_of(j) {
                v *= self.table[k * width + a as usize];
            }
            *t = v;
        }
        if let Some(tr) = &b.transform {
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for m in 0..=j {
                    acc += tr[(j, m)] * self.raw[m];
                }
                *o = acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::uniform_cube_points;

    #[test]
    fn constant_function_first() {
        let b = BasisSet::tensor_legendre(3, 2).unwrap();
        let row = b.eval_row(&[0.1, 0.9, 0.4]).unwrap();
        assert_eq!(row[0], 1.0);
        let m = BasisSet::monomial(2, 3).unwrap();
        assert_eq!(m.eval_row(&[-3.0, 7.0]).unwrap()[0], 1.0);
    }

    #[test]
    fn legendre_tensor_examples() {
        let b1 = BasisSet::tensor_legendre(1, 1).unwrap();
        assert_eq!(b1.eval_legendre_tensor(0, &[0.3]).unwrap(), 1.0);
        assert!(b1.eval_legendre_tensor(1, &[0.5]).unwrap().abs() < 1e-15);
        assert!((b1.eval_legendre_tensor(1, &[1.0]).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        let b2 = BasisSet::tensor_legendre(2, 1).unwrap();
        let row = b2.eval_row(&[0.5, 0.5]).unwrap();
        assert_eq!(row[0], 1.0);
        assert!(row[1].abs() < 1e-15 && row[2].abs() < 1e-15);
    }

    #[test]
    fn legendre_outside_cube_is_domain_error() {
        let b = BasisSet::tensor_legendre(2, 2).unwrap();
        assert_eq!(b.eval_row(&[0.5, 1.2]), Err(Error::Domain { coordinate: 1, value: 1.2 }));
        assert!(b.eval_legendre_tensor(1, &[-0.1, 0.0]).is_err());
    }

    #[test]
    fn monomial_powers() {
        let b = BasisSet::monomial(1, 3).unwrap();
        assert_eq!(b.eval_row(&[2.0]).unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        let b2 = BasisSet::monomial(2, 2).unwrap();
        assert_eq!(b2.eval_row(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn columns_agree_with_rows() {
        let pts = uniform_cube_points(3, 50, 11);
        for basis in [BasisSet::tensor_legendre(3, 3).unwrap(), BasisSet::monomial(3, 3).unwrap()] {
            let mut col = vec![0.0; pts.len()];
            for j in 0..basis.size() {
                basis.eval_column(j, &pts, &mut col);
                for (i, c) in col.iter().enumerate() {
                    let row = basis.eval_row(&pts.point(i)).unwrap();
                    assert!((row[j] - c).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn legendre_orthonormal_by_monte_carlo() {
        // |estimate - delta_ij| <= 3 standard errors at N = 10^6
        let n = 1_000_000;
        let basis = BasisSet::tensor_legendre(2, 3).unwrap();
        let pts = uniform_cube_points(2, n, 2024);
        let m = basis.size();
        let mut sums = vec![0.0; m * m];
        let mut sq = vec![0.0; m * m];
        let mut row = vec![0.0; m];
        let mut ev = basis.row_evaluator();
        let mut x = [0.0; 2];
        for i in 0..n {
            pts.point_into(i, &mut x);
            ev.eval(&x, &mut row).unwrap();
            for a in 0..m {
                for b in a..m {
                    let v = row[a] * row[b];
                    sums[a * m + b] += v;
                    sq[a * m + b] += v * v;
                }
            }
        }
        let mut failures = 0;
        for a in 0..m {
            for b in a..m {
                let mean = sums[a * m + b] / n as f64;
                let var = sq[a * m + b] / n as f64 - mean * mean;
                let se = (var / n as f64).sqrt();
                let delta = if a == b { 1.0 } else { 0.0 };
                if (mean - delta).abs() > 3.0 * se {
                    failures += 1;
                }
            }
        }
        // 55 pairs at 3 sigma: a couple of exceedances is within chance
        assert!(failures <= 3, "{failures} inner products outside 3 se");
    }
}
