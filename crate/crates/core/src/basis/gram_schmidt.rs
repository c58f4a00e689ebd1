use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{enumerate_multi_indices, BasisKind, BasisSet, MultiIndex};
use crate::error::{Error, Result};

pub const DEFAULT_ORTHOGONALITY_TOL: f64 = 1e-10;

// relative size of a Gram-Schmidt pivot below which the Gram matrix is
// treated as singular
const PIVOT_REL_TOL: f64 = 1e-13;

/// Moment functional `<x^a, x^b> = E[x^(a+b)]` tabulated up to a maximal
/// total degree.
#[derive(Clone, Debug)]
pub struct InnerProductOracle {
    dim: usize,
    max_moment_degree: u32,
    moments: HashMap<MultiIndex, f64>,
}

impl InnerProductOracle {
    /// Tabulates `moment(alpha)` for every `|alpha| <= max_moment_degree`.
    pub fn from_moments(
        dim: usize,
        max_moment_degree: u32,
        mut moment: impl FnMut(&MultiIndex) -> f64,
    ) -> Result<Self> {
        let moments = enumerate_multi_indices(dim, max_moment_degree)?
            .into_iter()
            .map(|a| {
                let m = moment(&a);
                (a, m)
            })
            .collect();
        Ok(Self { dim, max_moment_degree, moments })
    }

    /// Univariate oracle from the sequence `E[x^k]`, `k = 0..moments.len()`.
    pub fn univariate(moments: &[f64]) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::InvalidInput("empty moment sequence".into()));
        }
        Self::from_moments(1, (moments.len() - 1) as u32, |a| moments[a.exponents()[0] as usize])
    }

    /// Lebesgue measure on `[0,1]^dim`.
    pub fn lebesgue_cube(dim: usize, max_moment_degree: u32) -> Result<Self> {
        Self::from_moments(dim, max_moment_degree, |a| {
            a.exponents().iter().map(|&e| 1.0 / (e as f64 + 1.0)).product()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_moment_degree(&self) -> u32 {
        self.max_moment_degree
    }

    pub fn moment(&self, a: &MultiIndex) -> Option<f64> {
        self.moments.get(a).copied()
    }

    pub fn inner(&self, a: &MultiIndex, b: &MultiIndex) -> f64 {
        self.moments[&a.add(b)]
    }

    /// Gram matrix of a monomial family.
    pub fn gram(&self, indices: &[MultiIndex]) -> DMatrix<f64> {
        let m = indices.len();
        DMatrix::from_fn(m, m, |i, j| self.inner(&indices[i], &indices[j]))
    }
}

/// Orthonormalizes the monomial basis `raw` against `ip` by modified
/// Gram-Schmidt with one re-orthogonalization pass.
///
/// The result evaluates as `transform * (monomials)`, with a lower-triangular
/// transform whose diagonal is positive.
pub fn gram_schmidt(raw: &BasisSet, ip: &InnerProductOracle) -> Result<BasisSet> {
    gram_schmidt_with_tol(raw, ip, DEFAULT_ORTHOGONALITY_TOL)
}

pub fn gram_schmidt_with_tol(raw: &BasisSet, ip: &InnerProductOracle, tol: f64) -> Result<BasisSet> {
    if raw.kind() != BasisKind::Monomial {
        return Err(Error::InvalidInput("Gram-Schmidt expects a monomial basis".into()));
    }
    if raw.dim() != ip.dim() {
        return Err(Error::DimensionMismatch { expected: raw.dim(), actual: ip.dim() });
    }
    if 2 * raw.max_degree() > ip.max_moment_degree() {
        return Err(Error::InvalidInput(format!(
            "moments up to degree {} are needed, the oracle provides {}",
            2 * raw.max_degree(),
            ip.max_moment_degree()
        )));
    }
    let gram = ip.gram(raw.indices());
    if (gram[(0, 0)] - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "moment functional has total mass {}, expected 1",
            gram[(0, 0)]
        )));
    }

    let m = raw.size();
    let inner = |u: &[f64], v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            if u[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..m {
                row += gram[(i, j)] * v[j];
            }
            acc += u[i] * row;
        }
        acc
    };

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut v = vec![0.0; m];
        v[j] = 1.0;
        for _pass in 0..2 {
            for qi in &q {
                let proj = inner(qi, &v);
                for (vk, qk) in v.iter_mut().zip(qi) {
                    *vk -= proj * qk;
                }
            }
        }
        let norm_sq = inner(&v, &v);
        let scale = gram[(j, j)];
        if !(scale > 0.0) || !(norm_sq > PIVOT_REL_TOL * scale) {
            return Err(Error::IllConditionedMoments { pivot: j, residual: norm_sq });
        }
        let norm = norm_sq.sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }

    let transform = DMatrix::from_fn(m, m, |i, j| if j <= i { q[i][j] } else { 0.0 });
    // orthonormality under the same functional
    let check = &transform * &gram * transform.transpose();
    let mut worst = (0usize, 0.0f64);
    for i in 0..m {
        for j in 0..m {
            let dev = (check[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs();
            if dev > worst.1 {
                worst = (i.max(j), dev);
            }
        }
    }
    if worst.1 > tol {
        return Err(Error::IllConditionedMoments { pivot: worst.0, residual: worst.1 });
    }
    BasisSet::with_transform(raw, transform)
}
