use nalgebra::{DMatrix, DVector};

use crate::basis::{legendre, BasisKind, BasisSet, RowEvaluator};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::sampling::{SamplingLaw, WeightedSampleBatch};

/// Bytes the implicit oracle may spend caching univariate Legendre values.
pub const DEFAULT_CACHE_BUDGET: usize = 64 << 20;

/// Access to the (weighted) design matrix `V~ = sqrt(W) V` by rows and
/// columns, either from a stored dense matrix or by re-evaluating the basis
/// at the stored sample points.
pub struct VandermondeOracle<'a> {
    nrows: usize,
    ncols: usize,
    source: Source<'a>,
    row_norms: RowNorms,
    col_norms_sq: Vec<f64>,
    frobenius_norm_sq: f64,
}

enum Source<'a> {
    Dense(DMatrix<f64>),
    Implicit {
        basis: &'a BasisSet,
        points: &'a PointSet,
        sqrt_weights: Option<Vec<f64>>,
        cache: Option<LegendreCache>,
    },
}

enum RowNorms {
    Equal(f64),
    Varying(Vec<f64>),
}

/// `L~_a(x_ik)` for every point, coordinate and degree `1..=max_degree`.
struct LegendreCache {
    degree: usize,
    len: usize,
    values: Vec<f64>,
}

impl LegendreCache {
    fn build(points: &PointSet, degree: usize) -> Self {
        let len = points.len();
        let mut values = vec![0.0; points.dim() * degree * len];
        let mut buf = vec![0.0; degree + 1];
        for k in 0..points.dim() {
            for (i, &x) in points.coord(k).iter().enumerate() {
                legendre::shifted_legendre_all(x, &mut buf);
                for a in 1..=degree {
                    values[((k * degree) + a - 1) * len + i] = buf[a];
                }
            }
        }
        Self { degree, len, values }
    }

    fn slice(&self, k: usize, a: u32) -> &[f64] {
        let start = ((k * self.degree) + a as usize - 1) * self.len;
        &self.values[start..start + self.len]
    }
}

/// Scratch space for row access.
pub struct RowScratch<'b> {
    evaluator: Option<RowEvaluator<'b>>,
    point: Vec<f64>,
}

impl<'a> VandermondeOracle<'a> {
    /// Wraps an explicit matrix.
    pub fn dense(matrix: DMatrix<f64>) -> Self {
        let (nrows, ncols) = matrix.shape();
        let row_norms: Vec<f64> = (0..nrows).map(|i| matrix.row(i).norm_squared()).collect();
        let col_norms_sq = (0..ncols).map(|j| matrix.column(j).norm_squared()).collect();
        let frobenius_norm_sq = row_norms.iter().sum();
        Self {
            nrows,
            ncols,
            source: Source::Dense(matrix),
            row_norms: classify_rows(row_norms),
            col_norms_sq,
            frobenius_norm_sq,
        }
    }

    /// Materializes `sqrt(W) V` for `basis` at the points of `batch`.
    pub fn assemble(basis: &BasisSet, batch: &WeightedSampleBatch) -> Result<Self> {
        check_batch(basis, batch)?;
        let (n, m) = (batch.len(), basis.size());
        let mut matrix = DMatrix::zeros(n, m);
        let mut ev = basis.row_evaluator();
        let mut x = vec![0.0; basis.dim()];
        let mut row = vec![0.0; m];
        for i in 0..n {
            batch.points.point_into(i, &mut x);
            ev.eval_unchecked(&x, &mut row);
            let s = batch.weights[i].sqrt();
            for (j, v) in row.iter().enumerate() {
                matrix[(i, j)] = s * v;
            }
        }
        Ok(Self::dense(matrix))
    }

    /// Row/column oracle that never stores the matrix. Column norms (and row
    /// norms for unweighted batches) come from one streaming pass.
    pub fn implicit(basis: &'a BasisSet, batch: &'a WeightedSampleBatch) -> Result<Self> {
        Self::implicit_with_budget(basis, batch, DEFAULT_CACHE_BUDGET)
    }

    pub fn implicit_with_budget(
        basis: &'a BasisSet,
        batch: &'a WeightedSampleBatch,
        cache_budget: usize,
    ) -> Result<Self> {
        check_batch(basis, batch)?;
        let (n, m) = (batch.len(), basis.size());
        let weighted = batch.law == SamplingLaw::OptimalWeighted;
        let sqrt_weights = weighted.then(|| batch.weights.iter().map(|w| w.sqrt()).collect());
        let degree = basis.max_degree() as usize;
        let cache_bytes = n * basis.dim() * degree * std::mem::size_of::<f64>();
        let cache = (basis.kind() == BasisKind::TensorLegendre && degree > 0 && cache_bytes <= cache_budget)
            .then(|| LegendreCache::build(&batch.points, degree));

        let mut oracle = Self {
            nrows: n,
            ncols: m,
            source: Source::Implicit { basis, points: &batch.points, sqrt_weights, cache },
            row_norms: RowNorms::Equal(0.0),
            col_norms_sq: vec![0.0; m],
            frobenius_norm_sq: 0.0,
        };
        let mut row_norms = if weighted { Vec::new() } else { vec![0.0; n] };
        let mut col_norms = vec![0.0; m];
        let mut scratch = oracle.row_scratch();
        let mut row = vec![0.0; m];
        for i in 0..n {
            oracle.row_into(i, &mut scratch, &mut row);
            let mut s = 0.0;
            for (c, v) in col_norms.iter_mut().zip(&row) {
                let v2 = v * v;
                *c += v2;
                s += v2;
            }
            if !weighted {
                row_norms[i] = s;
            }
        }
        drop(scratch);
        oracle.frobenius_norm_sq = col_norms.iter().sum();
        oracle.col_norms_sq = col_norms;
        // rows of the optimally weighted matrix all have squared norm n+1
        oracle.row_norms = if weighted { RowNorms::Equal(m as f64) } else { classify_rows(row_norms) };
        Ok(oracle)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.source, Source::Dense(_))
    }

    pub fn dense_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.source {
            Source::Dense(m) => Some(m),
            Source::Implicit { .. } => None,
        }
    }

    pub fn row_norms_equal(&self) -> bool {
        matches!(self.row_norms, RowNorms::Equal(_))
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        match &self.row_norms {
            RowNorms::Equal(v) => *v,
            RowNorms::Varying(v) => v[i],
        }
    }

    /// Squared row norms when they differ, `None` when all rows share one norm.
    pub fn row_norms_sq(&self) -> Option<&[f64]> {
        match &self.row_norms {
            RowNorms::Equal(_) => None,
            RowNorms::Varying(v) => Some(v),
        }
    }

    pub fn col_norms_sq(&self) -> &[f64] {
        &self.col_norms_sq
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.frobenius_norm_sq
    }

    /// Heap bytes held by the oracle itself (matrix or caches).
    pub fn heap_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let rows = match &self.row_norms {
            RowNorms::Equal(_) => 0,
            RowNorms::Varying(v) => v.len() * f,
        };
        let src = match &self.source {
            Source::Dense(m) => m.len() * f,
            Source::Implicit { sqrt_weights, cache, .. } => {
                sqrt_weights.as_ref().map_or(0, |w| w.len() * f)
                    + cache.as_ref().map_or(0, |c| c.values.len() * f)
            }
        };
        rows + src + self.col_norms_sq.len() * f
    }

    pub fn row_scratch(&self) -> RowScratch<'a> {
        match &self.source {
            Source::Dense(_) => RowScratch { evaluator: None, point: Vec::new() },
            Source::Implicit { basis, .. } => {
                RowScratch { evaluator: Some(basis.row_evaluator()), point: vec![0.0; basis.dim()] }
            }
        }
    }

    /// Row `i` of the weighted design matrix.
    pub fn row_into(&self, i: usize, scratch: &mut RowScratch<'_>, out: &mut [f64]) {
        match &self.source {
            Source::Dense(m) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = m[(i, j)];
                }
            }
            Source::Implicit { points, sqrt_weights, .. } => {
                points.point_into(i, &mut scratch.point);
                let ev = scratch.evaluator.as_mut().expect("implicit scratch");
                ev.eval_unchecked(&scratch.point, out);
                if let Some(sw) = sqrt_weights {
                    let s = sw[i];
                    out.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }

    /// Column `j` of the weighted design matrix.
    pub fn column_into(&self, j: usize, out: &mut [f64]) {
        match &self.source {
            Source::Dense(m) => out.copy_from_slice(m.column(j).as_slice()),
            Source::Implicit { basis, points, sqrt_weights, cache } => {
                match cache {
                    Some(c) => {
                        let sup = basis.support_of(j);
                        match sup.split_first() {
                            None => out.fill(1.0),
                            Some((&(k, a), rest)) => {
                                out.copy_from_slice(c.slice(k, a));
                                for &(k, a) in rest {
                                    for (o, v) in out.iter_mut().zip(c.slice(k, a)) {
                                        *o *= v;
                                    }
                                }
                            }
                        }
                    }
                    None => basis.eval_column(j, points, out),
                }
                if let Some(sw) = sqrt_weights {
                    for (o, s) in out.iter_mut().zip(sw) {
                        *o *= s;
                    }
                }
            }
        }
    }

    /// `V c`.
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        match &self.source {
            Source::Dense(m) => (m * DVector::from_column_slice(c)).data.into(),
            Source::Implicit { .. } => {
                let mut scratch = self.row_scratch();
                let mut row = vec![0.0; self.ncols];
                (0..self.nrows)
                    .map(|i| {
                        self.row_into(i, &mut scratch, &mut row);
                        dot(&row, c)
                    })
                    .collect()
            }
        }
    }

    /// `V^T r`.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        match &self.source {
            Source::Dense(m) => (m.tr_mul(&DVector::from_column_slice(r))).data.into(),
            Source::Implicit { .. } => {
                let mut scratch = self.row_scratch();
                let mut row = vec![0.0; self.ncols];
                let mut acc = vec![0.0; self.ncols];
                for (i, &ri) in r.iter().enumerate() {
                    self.row_into(i, &mut scratch, &mut row);
                    axpy(ri, &row, &mut acc);
                }
                acc
            }
        }
    }

    /// Residual `V c - f` and `V^T (V c - f)` in one pass over the rows.
    pub fn residual_and_gradient(&self, c: &[f64], f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let residual: Vec<f64> = self.apply(c).iter().zip(f).map(|(a, b)| a - b).collect();
        let grad = self.apply_transpose(&residual);
        (residual, grad)
    }

    /// `(||V c - (f - z)||, ||V^T z||)`, the two convergence measures of the
    /// extended Kaczmarz iteration, from a single pass.
    pub fn kaczmarz_residuals(&self, c: &[f64], z: &[f64], f: &[f64]) -> (f64, f64) {
        let mut scratch = self.row_scratch();
        let mut row = vec![0.0; self.ncols];
        let mut vtz = vec![0.0; self.ncols];
        let mut r1 = 0.0;
        for i in 0..self.nrows {
            self.row_into(i, &mut scratch, &mut row);
            let e = dot(&row, c) - (f[i] - z[i]);
            r1 += e * e;
            axpy(z[i], &row, &mut vtz);
        }
        (r1.sqrt(), norm(&vtz))
    }
}

fn classify_rows(norms: Vec<f64>) -> RowNorms {
    match norms.first() {
        Some(&first) if norms.iter().all(|&v| (v - first).abs() <= 1e-12 * first.abs().max(1e-300)) => {
            RowNorms::Equal(first)
        }
        Some(_) => RowNorms::Varying(norms),
        None => RowNorms::Equal(0.0),
    }
}

fn check_batch(basis: &BasisSet, batch: &WeightedSampleBatch) -> Result<()> {
    if batch.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), actual: batch.dim() });
    }
    let mut x = vec![0.0; basis.dim()];
    for i in 0..batch.len() {
        batch.points.point_into(i, &mut x);
        basis.check_domain(&x)?;
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_optimal, sample_plain, UniformCube};

    #[test]
    fn implicit_matches_assembled() {
        let basis = BasisSet::tensor_legendre(3, 3).unwrap();
        for batch in [sample_optimal(&basis, 300, 4).unwrap(), sample_plain(&UniformCube { dim: 3 }, 300, 4).unwrap()] {
            let dense = VandermondeOracle::assemble(&basis, &batch).unwrap();
            let cached = VandermondeOracle::implicit(&basis, &batch).unwrap();
            let uncached = VandermondeOracle::implicit_with_budget(&basis, &batch, 0).unwrap();
            assert_eq!(dense.row_norms_equal(), batch.law == SamplingLaw::OptimalWeighted);
            assert_eq!(cached.row_norms_equal(), dense.row_norms_equal());
            let rel = (dense.frobenius_norm_sq() - cached.frobenius_norm_sq()).abs() / dense.frobenius_norm_sq();
            assert!(rel < 1e-12);
            let mut a = vec![0.0; 300];
            let mut b = vec![0.0; 300];
            let mut c = vec![0.0; 300];
            for j in 0..basis.size() {
                dense.column_into(j, &mut a);
                cached.column_into(j, &mut b);
                uncached.column_into(j, &mut c);
                for i in 0..300 {
                    assert!((a[i] - b[i]).abs() < 1e-12 && (a[i] - c[i]).abs() < 1e-12);
                }
                assert!((dense.col_norms_sq()[j] - cached.col_norms_sq()[j]).abs() < 1e-9);
            }
            let x: Vec<f64> = (0..basis.size()).map(|j| (j as f64).sin()).collect();
            let (ya, yb) = (dense.apply(&x), cached.apply(&x));
            assert!(ya.iter().zip(&yb).all(|(p, q)| (p - q).abs() < 1e-10));
            let (ta, tb) = (dense.apply_transpose(&ya), cached.apply_transpose(&ya));
            assert!(ta.iter().zip(&tb).all(|(p, q)| (p - q).abs() < 1e-8));
        }
    }

    #[test]
    fn weighted_frobenius_is_n_times_size() {
        let basis = BasisSet::tensor_legendre(2, 4).unwrap();
        let batch = sample_optimal(&basis, 1000, 8).unwrap();
        let o = VandermondeOracle::implicit(&basis, &batch).unwrap();
        let expect = 1000.0 * basis.size() as f64;
        assert!((o.frobenius_norm_sq() - expect).abs() < 1e-9 * expect);
        assert_eq!(o.row_norm_sq(17), basis.size() as f64);
    }

    #[test]
    fn out_of_domain_points_rejected() {
        let basis = BasisSet::tensor_legendre(1, 2).unwrap();
        let batch = WeightedSampleBatch::plain_from_points(PointSet::from_scalars(vec![0.2, 1.5]), 0).unwrap();
        assert!(matches!(VandermondeOracle::implicit(&basis, &batch), Err(Error::Domain { .. })));
    }
}
