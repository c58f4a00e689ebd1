//! Generator matrices of polynomial diffusions and the moment formula
//! `E[p(X_T)] = H(x0) exp(G T) p`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::black_scholes::BlackScholesSpec;
use super::expm::expm;
use super::sde::{HestonSpec, JacobiSpec};
use crate::basis::{enumerate_multi_indices, MultiIndex};
use crate::error::{Error, Result};

// dense generators beyond this size are refused
const MAX_DENSE_SIZE: usize = 4096;

/// Sparse polynomial: `sum c * x^e`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(mut self, exponents: Vec<u32>, coeff: f64) -> Self {
        if coeff != 0.0 {
            self.terms.push((exponents, coeff));
        }
        self
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * monomial(e, x)).sum()
    }
}

fn monomial(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).map(|(&a, &v)| v.powi(a as i32)).product()
}

/// Generator `G p = b . grad p + 1/2 tr(a Hess p)` with polynomial drift `b`
/// (degree <= 1) and diffusion matrix `a` (degree <= 2).
#[derive(Clone, Debug)]
pub struct PolynomialDiffusion {
    dim: usize,
    drift: Vec<Polynomial>,
    /// Symmetric, row-major `dim x dim`.
    diffusion: Vec<Polynomial>,
}

impl PolynomialDiffusion {
    pub fn new(dim: usize, drift: Vec<Polynomial>, diffusion: Vec<Polynomial>) -> Result<Self> {
        if drift.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: drift.len() });
        }
        if diffusion.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, actual: diffusion.len() });
        }
        let bad_dim = |p: &Polynomial| p.terms.iter().any(|(e, _)| e.len() != dim);
        if drift.iter().chain(&diffusion).any(bad_dim) {
            return Err(Error::InvalidInput("polynomial term of the wrong dimension".into()));
        }
        if drift.iter().any(|p| p.degree() > 1) || diffusion.iter().any(|p| p.degree() > 2) {
            return Err(Error::InvalidInput("not a polynomial diffusion: drift degree > 1 or diffusion degree > 2".into()));
        }
        for i in 0..dim {
            for k in 0..i {
                if diffusion[i * dim + k] != diffusion[k * dim + i] {
                    return Err(Error::InvalidInput("diffusion matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { dim, drift, diffusion })
    }

    /// State `(v, x)`: `b = (kappa theta - kappa v, r - v/2)`,
    /// `a = v [[sigma^2, rho sigma], [rho sigma, 1]]`.
    pub fn heston(s: &HestonSpec) -> Self {
        let v = |c: f64| Polynomial::zero().term(vec![1, 0], c);
        let drift = vec![
            Polynomial::zero().term(vec![0, 0], s.kappa * s.theta).term(vec![1, 0], -s.kappa),
            Polynomial::zero().term(vec![0, 0], s.r).term(vec![1, 0], -0.5),
        ];
        let cross = v(s.rho * s.sigma);
        let diffusion = vec![v(s.sigma * s.sigma), cross.clone(), cross, v(1.0)];
        Self { dim: 2, drift, diffusion }
    }

    /// As Heston with `a_vv = sigma^2 Q(v)`, `a_vx = rho sigma Q(v)`,
    /// `a_xx = v`.
    pub fn jacobi(s: &JacobiSpec) -> Self {
        let scale = 1.0 / s.q_scale();
        // Q(v) = (-v^2 + (vmin + vmax) v - vmin vmax) / scale
        let q = |c: f64| {
            Polynomial::zero()
                .term(vec![0, 0], -c * s.vmin * s.vmax * scale)
                .term(vec![1, 0], c * (s.vmin + s.vmax) * scale)
                .term(vec![2, 0], -c * scale)
        };
        let drift = vec![
            Polynomial::zero().term(vec![0, 0], s.kappa * s.theta).term(vec![1, 0], -s.kappa),
            Polynomial::zero().term(vec![0, 0], s.r).term(vec![1, 0], -0.5),
        ];
        let cross = q(s.rho * s.sigma);
        let diffusion = vec![q(s.sigma * s.sigma), cross.clone(), cross, Polynomial::zero().term(vec![1, 0], 1.0)];
        Self { dim: 2, drift, diffusion }
    }

    /// Prices `s`: `b_i = r s_i`, `a_ij = sigma_i sigma_j rho_ij s_i s_j`.
    pub fn black_scholes(s: &BlackScholesSpec) -> Self {
        let d = s.dim();
        let unit = |i: usize, p: u32| {
            let mut e = vec![0; d];
            e[i] += p;
            e
        };
        let drift = (0..d).map(|i| Polynomial::zero().term(unit(i, 1), s.r)).collect();
        let mut diffusion = Vec::with_capacity(d * d);
        for i in 0..d {
            for k in 0..d {
                let mut e = unit(i, 1);
                e[k] += 1;
                diffusion.push(Polynomial::zero().term(e, s.sigma[i] * s.sigma[k] * s.corr[(i, k)]));
            }
        }
        Self { dim: d, drift, diffusion }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `G` applied to `x^e`, as (exponent, coefficient) pairs.
    fn apply_monomial(&self, e: &[u32], out: &mut HashMap<Vec<u32>, f64>) {
        let d = self.dim;
        let mut shifted = |poly: &Polynomial, lowered: &[u32], factor: f64| {
            for (pe, c) in &poly.terms {
                let key: Vec<u32> = pe.iter().zip(lowered).map(|(a, b)| a + b).collect();
                *out.entry(key).or_insert(0.0) += c * factor;
            }
        };
        for i in 0..d {
            if e[i] == 0 {
                continue;
            }
            let mut low = e.to_vec();
            low[i] -= 1;
            shifted(&self.drift[i], &low, e[i] as f64);
        }
        for i in 0..d {
            for k in 0..d {
                let mut low = e.to_vec();
                let coef = if i == k {
                    if e[i] < 2 {
                        continue;
                    }
                    low[i] -= 2;
                    (e[i] * (e[i] - 1)) as f64
                } else {
                    if e[i] == 0 || e[k] == 0 {
                        continue;
                    }
                    low[i] -= 1;
                    low[k] -= 1;
                    (e[i] * e[k]) as f64
                };
                shifted(&self.diffusion[i * d + k], &low, 0.5 * coef);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorStructure {
    Diagonal,
    /// Zero whenever a column's degree is below its row's (graded order).
    TriangularBlock,
    Dense,
}

#[derive(Clone, Debug)]
enum Entries {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// Matrix of a generator on monomials of total degree `<= n` in graded
/// order. Column `j` holds the coefficients of `G` applied to monomial `j`.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    dim: usize,
    degree: u32,
    indices: Vec<MultiIndex>,
    lookup: HashMap<Vec<u32>, usize>,
    entries: Entries,
    structure: GeneratorStructure,
}

impl GeneratorMatrix {
    fn new(dim: usize, degree: u32, indices: Vec<MultiIndex>, entries: Entries, structure: GeneratorStructure) -> Self {
        let lookup = indices.iter().enumerate().map(|(i, m)| (m.exponents().to_vec(), i)).collect();
        Self { dim, degree, indices, lookup, entries, structure }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn structure(&self) -> GeneratorStructure {
        self.structure
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }

    pub fn diagonal(&self) -> Option<&[f64]> {
        match &self.entries {
            Entries::Diagonal(d) => Some(d),
            Entries::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.entries {
            Entries::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Entries::Dense(m) => m.clone(),
        }
    }

    /// `H(x0)`: the monomials evaluated at `x0`.
    pub fn monomials_at(&self, x0: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x0.len() });
        }
        Ok(self.indices.iter().map(|m| monomial(m.exponents(), x0)).collect())
    }

    /// `H(x0) exp(G t)`: entry `j` is `E[x^{e_j}]` at time `t`.
    pub fn moment_row(&self, t: f64, x0: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput("moment horizon must be non-negative".into()));
        }
        let h = self.monomials_at(x0)?;
        let row = match &self.entries {
            Entries::Diagonal(g) => h.iter().zip(g).map(|(hj, gj)| hj * (gj * t).exp()).collect::<Vec<_>>(),
            Entries::Dense(g) => {
                let e = expm(&(g * t))?;
                (DVector::from_vec(h).transpose() * e).iter().copied().collect()
            }
        };
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::MatrixExponential);
        }
        Ok(row)
    }

    /// `E[x^e]` at time `t` for a single monomial of degree `<= n`.
    pub fn expected_monomial(&self, exponents: &[u32], t: f64, x0: &[f64]) -> Result<f64> {
        let j = self
            .index_of(exponents)
            .ok_or_else(|| Error::InvalidInput(format!("monomial {exponents:?} exceeds the generator degree")))?;
        Ok(self.moment_row(t, x0)?[j])
    }
}

/// Generator matrix of a polynomial diffusion at degree `n`.
pub fn build_generator_poly(diffusion: &PolynomialDiffusion, n: u32) -> Result<GeneratorMatrix> {
    let d = diffusion.dim();
    let indices = enumerate_multi_indices(d, n)?;
    let m = indices.len();
    if m > MAX_DENSE_SIZE {
        return Err(Error::Capacity(format!("generator of size {m} exceeds {MAX_DENSE_SIZE}")));
    }
    let lookup: HashMap<&[u32], usize> = indices.iter().enumerate().map(|(i, e)| (e.exponents(), i)).collect();
    let mut g = DMatrix::zeros(m, m);
    let mut image = HashMap::new();
    for (j, e) in indices.iter().enumerate() {
        image.clear();
        diffusion.apply_monomial(e.exponents(), &mut image);
        for (key, c) in &image {
            if *c == 0.0 {
                continue;
            }
            let i = *lookup
                .get(key.as_slice())
                .ok_or_else(|| Error::InvalidInput("generator raises the polynomial degree".into()))?;
            g[(i, j)] = *c;
        }
    }
    let structure = classify(&g, &indices);
    Ok(GeneratorMatrix::new(d, n, indices, Entries::Dense(g), structure))
}

fn classify(g: &DMatrix<f64>, indices: &[MultiIndex]) -> GeneratorStructure {
    let m = indices.len();
    let off_diagonal = (0..m).any(|j| (0..m).any(|i| i != j && g[(i, j)] != 0.0));
    if !off_diagonal {
        return GeneratorStructure::Diagonal;
    }
    let raises = (0..m).any(|j| {
        (0..m).any(|i| indices[i].total_degree() > indices[j].total_degree() && g[(i, j)] != 0.0)
    });
    if raises {
        GeneratorStructure::Dense
    } else {
        GeneratorStructure::TriangularBlock
    }
}

/// Diagonal generator of multivariate Black-Scholes:
/// `G_kk = 1/2 sum_ij sigma_i sigma_j rho_ij (k_i k_j [i != j] + k_i (k_i - 1) [i = j]) + r sum_i k_i`.
pub fn build_generator_bs(spec: &BlackScholesSpec, n: u32) -> Result<GeneratorMatrix> {
    let d = spec.dim();
    let indices = enumerate_multi_indices(d, n)?;
    let diag = indices
        .iter()
        .map(|idx| {
            let k = idx.exponents();
            // same summation order as the generic generator for bitwise agreement
            let mut g = 0.0;
            for i in 0..d {
                if k[i] > 0 {
                    g += spec.r * k[i] as f64;
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let c = if i == j { k[i] * k[i].saturating_sub(1) } else { k[i] * k[j] };
                    if c > 0 {
                        g += spec.sigma[i] * spec.sigma[j] * spec.corr[(i, j)] * (0.5 * c as f64);
                    }
                }
            }
            g
        })
        .collect();
    Ok(GeneratorMatrix::new(d, n, indices, Entries::Diagonal(diag), GeneratorStructure::Diagonal))
}

/// `H(x0) exp(G t) p`.
pub fn moment(g: &GeneratorMatrix, p: &[f64], t: f64, x0: &[f64]) -> Result<f64> {
    if p.len() != g.size() {
        return Err(Error::DimensionMismatch { expected: g.size(), actual: p.len() });
    }
    Ok(g.moment_row(t, x0)?.iter().zip(p).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(g: &GeneratorMatrix, e: &[u32]) -> Vec<(Vec<u32>, f64)> {
        let dense = g.to_dense();
        let j = g.index_of(e).unwrap();
        g.indices()
            .iter()
            .enumerate()
            .filter(|(i, _)| dense[(*i, j)] != 0.0)
            .map(|(i, m)| (m.exponents().to_vec(), dense[(i, j)]))
            .collect()
    }

    #[test]
    fn heston_columns() {
        let s = HestonSpec::paper();
        let g = build_generator_poly(&PolynomialDiffusion::heston(&s), 3).unwrap();
        assert!(column(&g, &[0, 0]).is_empty());
        let mut gx = column(&g, &[0, 1]);
        gx.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(gx, vec![(vec![0, 0], s.r), (vec![1, 0], -0.5)]);
        let mut gv = column(&g, &[1, 0]);
        gv.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(gv, vec![(vec![0, 0], s.kappa * s.theta), (vec![1, 0], -s.kappa)]);
        assert_eq!(g.structure(), GeneratorStructure::TriangularBlock);
    }

    #[test]
    fn bs_lemma_entries() {
        let spec = BlackScholesSpec::uncorrelated(1, 1.0, 0.2, 0.01).unwrap();
        let g = build_generator_bs(&spec, 3).unwrap();
        let d = g.diagonal().unwrap();
        assert_eq!(d[g.index_of(&[0]).unwrap()], 0.0);
        assert!((d[g.index_of(&[1]).unwrap()] - 0.01).abs() < 1e-16);
        assert!((d[g.index_of(&[2]).unwrap()] - 0.06).abs() < 1e-15);
        let m2 = g.expected_monomial(&[2], 1.0, &[1.0]).unwrap();
        assert!((m2 - 0.06f64.exp()).abs() < 1e-14);
        assert!((m2 - 1.061_836_546_545_359_6).abs() < 1e-12);
    }

    #[test]
    fn generic_generator_reproduces_diagonal_lemma() {
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.4, -0.2, 0.4, 1.0]);
        let spec = BlackScholesSpec::new(vec![1.0, 0.9, 1.2], vec![0.2, 0.35, 0.1], corr, 0.03).unwrap();
        let a = build_generator_poly(&PolynomialDiffusion::black_scholes(&spec), 4).unwrap();
        let b = build_generator_bs(&spec, 4).unwrap();
        assert_eq!(a.structure(), GeneratorStructure::Diagonal);
        assert_eq!(a.to_dense(), b.to_dense());
    }

    #[test]
    fn jacobi_is_block_triangular() {
        let g = build_generator_poly(&PolynomialDiffusion::jacobi(&JacobiSpec::paper()), 6).unwrap();
        assert_eq!(g.structure(), GeneratorStructure::TriangularBlock);
        let dense = g.to_dense();
        for (i, a) in g.indices().iter().enumerate() {
            for (j, b) in g.indices().iter().enumerate() {
                if a.total_degree() > b.total_degree() {
                    assert_eq!(dense[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn moment_trivial_cases() {
        let s = HestonSpec::paper();
        let g = build_generator_poly(&PolynomialDiffusion::heston(&s), 4).unwrap();
        let x0 = [s.v0, 0.3];
        let p: Vec<f64> = (0..g.size()).map(|i| (i as f64 * 0.37).sin()).collect();
        let at_zero = moment(&g, &p, 0.0, &x0).unwrap();
        let direct: f64 = g.monomials_at(&x0).unwrap().iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((at_zero - direct).abs() < 1e-15);
        let mut one = vec![0.0; g.size()];
        one[0] = 1.0;
        for t in [0.1, 1.0, 10.0] {
            assert!((moment(&g, &one, t, &x0).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn cir_mean_closed_form() {
        let s = HestonSpec::paper();
        let g = build_generator_poly(&PolynomialDiffusion::heston(&s), 2).unwrap();
        let t = 0.7;
        let ev = g.expected_monomial(&[1, 0], t, &[s.v0, s.x0]).unwrap();
        let exact = s.theta + (s.v0 - s.theta) * (-s.kappa * t).exp();
        assert!((ev - exact).abs() < 1e-15);
        // E[X_t] = x0 + r t - (1/2) int_0^t E[V_s] ds
        let ex = g.expected_monomial(&[0, 1], t, &[s.v0, s.x0]).unwrap();
        let int_v = s.theta * t + (s.v0 - s.theta) * (1.0 - (-s.kappa * t).exp()) / s.kappa;
        assert!((ex - (s.x0 + s.r * t - 0.5 * int_v)).abs() < 1e-15);
    }

    #[test]
    fn semigroup() {
        for diffusion in [
            PolynomialDiffusion::heston(&HestonSpec::paper()),
            PolynomialDiffusion::jacobi(&JacobiSpec::paper()),
        ] {
            let g = build_generator_poly(&diffusion, 6).unwrap().to_dense();
            let t = 1.3;
            let full = expm(&(&g * t)).unwrap();
            let half = expm(&(&g * (t / 2.0))).unwrap();
            let twice = &half * &half;
            assert!((&full - &twice).norm() <= 1e-10 * full.norm());
        }
    }

    #[test]
    fn rejects_degree_raising_dynamics() {
        let drift = vec![Polynomial::zero().term(vec![2], 1.0)];
        let diff = vec![Polynomial::zero()];
        assert!(PolynomialDiffusion::new(1, drift, diff).is_err());
    }
}
