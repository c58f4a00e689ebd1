use std::fmt;

use crate::error::{Error, Result};

/// Largest basis we are willing to enumerate.
pub const MAX_ENUMERATION: usize = 50_000_000;

/// Exponent tuple of a monomial or tensor-product basis function.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// Unit index `e_k` in dimension `dim`.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut e = vec![0; dim];
        e[k] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Componentwise sum; the exponent of a product of monomials.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `(coordinate, exponent)` pairs with a non-zero exponent.
    pub fn support(&self) -> Vec<(usize, u32)> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(k, &a)| (k, a))
            .collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Number of multi-indices in `d` variables with total degree at most
/// `degree`, i.e. `binom(degree + d, d)`.
pub fn count_multi_indices(d: usize, degree: u32) -> Result<usize> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    // binom(degree + d, min(d, degree)) built incrementally; every partial
    // product is itself a binomial coefficient, so the division is exact.
    let k = (d as u128).min(degree as u128);
    let top = degree as u128 + d as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc
            .checked_mul(top - k + i)
            .ok_or_else(|| capacity(d, degree))?
            / i;
    }
    usize::try_from(acc).map_err(|_| capacity(d, degree))
}

fn capacity(d: usize, degree: u32) -> Error {
    Error::Capacity(format!("basis of dimension {d} and degree {degree} is too large"))
}

/// All multi-indices of total degree `<= max_total_degree`, in graded order:
/// degree-major, and within one degree lexicographically descending, so
/// `(1,0)` precedes `(0,1)`.
pub fn enumerate_multi_indices(d: usize, max_total_degree: u32) -> Result<Vec<MultiIndex>> {
    let count = count_multi_indices(d, max_total_degree)?;
    if count > MAX_ENUMERATION {
        return Err(capacity(d, max_total_degree));
    }
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0u32; d];
    for degree in 0..=max_total_degree {
        compositions(&mut current, 0, degree, &mut out);
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

/// First `size` functions of the graded enumeration (a prefix, since the
/// order is graded).
pub fn enumerate_prefix(d: usize, size: usize) -> Result<Vec<MultiIndex>> {
    if size == 0 {
        return Err(Error::InvalidInput("basis size must be at least 1".into()));
    }
    if size > MAX_ENUMERATION {
        return Err(Error::Capacity(format!("basis size {size} is too large")));
    }
    let mut degree = 0;
    while count_multi_indices(d, degree)? < size {
        degree += 1;
    }
    let mut all = enumerate_multi_indices(d, degree)?;
    all.truncate(size);
    Ok(all)
}

fn compositions(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        current[pos] = 0;
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        compositions(current, pos + 1, remaining - a, out);
    }
    current[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn tuples(v: &[MultiIndex]) -> Vec<Vec<u32>> {
        v.iter().map(|m| m.exponents().to_vec()).collect()
    }

    #[test]
    fn univariate_ladder() {
        let idx = enumerate_multi_indices(1, 3).unwrap();
        assert_eq!(tuples(&idx), vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn bivariate_degree_two_order() {
        let idx = enumerate_multi_indices(2, 2).unwrap();
        assert_eq!(
            tuples(&idx),
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn five_dimensional_degree_five_has_252() {
        assert_eq!(enumerate_multi_indices(5, 5).unwrap().len(), 252);
        assert_eq!(count_multi_indices(10, 5).unwrap(), 3003);
        assert_eq!(count_multi_indices(20, 2).unwrap(), 231);
    }

    #[test]
    fn extreme_sizes_report_capacity() {
        assert!(matches!(count_multi_indices(400, 400), Err(Error::Capacity(_))));
        assert!(matches!(enumerate_multi_indices(30, 12), Err(Error::Capacity(_))));
    }

    #[test]
    fn prefix_truncates_graded_order() {
        let p = enumerate_prefix(2, 4).unwrap();
        assert_eq!(tuples(&p), vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0]]);
    }

    proptest::proptest! {
        #[test]
        fn enumeration_is_a_graded_bijection(d in 1usize..5, deg in 0u32..6) {
            let idx = enumerate_multi_indices(d, deg).unwrap();
            proptest::prop_assert_eq!(idx.len(), count_multi_indices(d, deg).unwrap());
            let set: HashSet<_> = idx.iter().cloned().collect();
            proptest::prop_assert_eq!(set.len(), idx.len());
            proptest::prop_assert!(idx[0].is_zero());
            for w in idx.windows(2) {
                proptest::prop_assert!(w[0].total_degree() <= w[1].total_degree());
                if w[0].total_degree() == w[1].total_degree() {
                    proptest::prop_assert!(w[0] > w[1]);
                }
            }
        }
    }
}
