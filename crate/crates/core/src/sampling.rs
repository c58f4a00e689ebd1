//! Sample batches drawn from a base measure `mu`, or from the optimal
//! weighted law `mu / w` with `1/w(x) = sum_j phi_j(x)^2 / (n+1)`.

use std::f64::consts::PI;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::basis::{legendre, BasisKind, BasisSet};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::stream_rng;

/// Attempts allowed per point before the rejection sampler gives up.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingLaw {
    Plain,
    OptimalWeighted,
}

#[derive(Clone, Debug)]
pub struct WeightedSampleBatch {
    pub points: PointSet,
    /// `w(x_i)`; identically one for plain batches.
    pub weights: Vec<f64>,
    pub law: SamplingLaw,
    pub seed: u64,
}

impl WeightedSampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Wraps externally produced points (e.g. simulated terminal states) as a
    /// plain batch.
    pub fn plain_from_points(points: PointSet, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("a batch needs at least one point".into()));
        }
        let weights = vec![1.0; points.len()];
        Ok(Self { points, weights, law: SamplingLaw::Plain, seed })
    }
}

/// A probability measure we can draw from.
pub trait MeasureSampler: Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
}

/// Lebesgue measure on the open unit cube.
#[derive(Clone, Copy, Debug)]
pub struct UniformCube {
    pub dim: usize,
}

impl MeasureSampler for UniformCube {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = open01(rng));
    }
}

/// Uniform draw from the open interval `(0, 1)`.
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `N` i.i.d. draws from `sampler`, all weights one. Point `i` uses stream
/// `i` of `seed`.
pub fn sample_plain(sampler: &dyn MeasureSampler, n: usize, seed: u64) -> Result<WeightedSampleBatch> {
    if n == 0 {
        return Err(Error::InvalidInput("a batch needs at least one point".into()));
    }
    let (points, weights) = PointSet::generate(
        sampler.dim(),
        n,
        || (),
        |_, i, out| {
            let mut rng = stream_rng(seed, i as u64);
            sampler.sample_into(&mut rng, out);
            Ok(1.0)
        },
    )?;
    Ok(WeightedSampleBatch { points, weights, law: SamplingLaw::Plain, seed })
}

/// Uniform points on the cube, a shorthand used throughout the tests.
pub fn uniform_cube_points(dim: usize, n: usize, seed: u64) -> PointSet {
    sample_plain(&UniformCube { dim }, n, seed).expect("uniform sampling cannot fail").points
}

/// `w(x) = (n+1) / sum_j phi_j(x)^2`.
pub fn optimal_weight(basis: &BasisSet, x: &[f64]) -> Result<f64> {
    let row = basis.eval_row(x)?;
    Ok(weight_from_row(&row))
}

fn weight_from_row(row: &[f64]) -> f64 {
    let s: f64 = row.iter().map(|v| v * v).sum();
    row.len() as f64 / s
}

/// `N` i.i.d. draws from `mu / w` for a tensor-Legendre basis on the unit
/// cube, with their weights.
///
/// Each point picks `j` uniformly and draws from `phi_j^2 dmu`. Since
/// `phi_j^2` is a product of univariate factors, every coordinate is drawn
/// independently by rejection. The proposal is the arcsine law: by
/// Bernstein's inequality `L~_a(x)^2 / 2 <= 2 / (pi sqrt(1 - t^2))` with
/// `t = 2x - 1`, so acceptance is 1/2 whatever the degree.
pub fn sample_optimal(basis: &BasisSet, n: usize, seed: u64) -> Result<WeightedSampleBatch> {
    sample_optimal_with(basis, n, seed, DEFAULT_MAX_ATTEMPTS)
}

pub fn sample_optimal_with(
    basis: &BasisSet,
    n: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<WeightedSampleBatch> {
    if basis.kind() != BasisKind::TensorLegendre {
        return Err(Error::InvalidInput(
            "optimal weighted sampling needs a tensor-Legendre basis on the unit cube".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("a batch needs at least one point".into()));
    }
    let size = basis.size();
    let (points, weights) = PointSet::generate(
        basis.dim(),
        n,
        || (basis.row_evaluator(), vec![0.0; size]),
        |(ev, row), i, out| {
            let mut rng = stream_rng(seed, i as u64);
            let j = rng.random_range(0..size);
            out.iter_mut().for_each(|x| *x = open01(&mut rng));
            let mut attempts = 0u64;
            for &(k, a) in basis.support_of(j) {
                loop {
                    attempts += 1;
                    if attempts > max_attempts {
                        return Err(Error::SamplerStuck {
                            attempts,
                            acceptance_rate: basis.support_of(j).len() as f64 / attempts as f64,
                        });
                    }
                    let v = open01(&mut rng);
                    let u = open01(&mut rng);
                    let x = 0.5 * (1.0 + (PI * v).cos());
                    // rounding can land on the boundary
                    if !(x > 0.0 && x < 1.0) {
                        continue;
                    }
                    if 4.0 * u <= arcsine_ratio(a, x, v) {
                        out[k] = x;
                        break;
                    }
                }
            }
            ev.eval_unchecked(out, row);
            Ok(weight_from_row(row))
        },
    )?;
    Ok(WeightedSampleBatch { points, weights, law: SamplingLaw::OptimalWeighted, seed })
}

/// `L~_a(x)^2 pi sin(pi v)` for `x = (1 + cos(pi v)) / 2`; at most 4.
fn arcsine_ratio(a: u32, x: f64, v: f64) -> f64 {
    let p = legendre::shifted_legendre(a, x);
    p * p * PI * (PI * v).sin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arcsine_envelope_holds() {
        for a in [0u32, 1, 2, 5, 17, 100, 1000] {
            for i in 1..20_000 {
                let v = i as f64 / 20_000.0;
                let x = 0.5 * (1.0 + (PI * v).cos());
                let r = arcsine_ratio(a, x, v);
                assert!(r <= 4.0 * (1.0 + 1e-12), "a = {a}, v = {v}: {r}");
            }
        }
    }

    #[test]
    fn high_degree_sampling_is_cheap() {
        let basis = BasisSet::tensor_legendre(1, 1000).unwrap();
        let batch = sample_optimal_with(&basis, 2000, 4, 200).unwrap();
        assert!(batch.points.coord(0).iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn weight_examples() {
        let b0 = BasisSet::tensor_legendre(1, 0).unwrap();
        assert_eq!(optimal_weight(&b0, &[0.3]).unwrap(), 1.0);
        let b1 = BasisSet::tensor_legendre(1, 1).unwrap();
        assert!((optimal_weight(&b1, &[0.5]).unwrap() - 2.0).abs() < 1e-15);
        assert!((optimal_weight(&b1, &[1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plain_uniform_mean_in_clt_band() {
        let n = 100_000;
        let batch = sample_plain(&UniformCube { dim: 1 }, n, 5).unwrap();
        let mean = batch.points.coord(0).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() <= 3.0 / (12.0 * n as f64).sqrt());
        assert!(batch.weights.iter().all(|&w| w == 1.0));
        assert_eq!(batch.law, SamplingLaw::Plain);
    }

    #[test]
    fn plain_batches_are_deterministic() {
        let a = sample_plain(&UniformCube { dim: 3 }, 1000, 42).unwrap();
        let b = sample_plain(&UniformCube { dim: 3 }, 1000, 42).unwrap();
        assert_eq!(a.points, b.points);
        let one = sample_plain(&UniformCube { dim: 2 }, 1, 42).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights, vec![1.0]);
        assert!(sample_plain(&UniformCube { dim: 2 }, 0, 42).is_err());
    }

    #[test]
    fn degree_zero_optimal_is_plain() {
        let b0 = BasisSet::tensor_legendre(2, 0).unwrap();
        let batch = sample_optimal(&b0, 500, 3).unwrap();
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn optimal_rows_have_equal_norm() {
        let basis = BasisSet::tensor_legendre(3, 4).unwrap();
        let batch = sample_optimal(&basis, 2000, 9).unwrap();
        let target = basis.size() as f64;
        for i in 0..batch.len() {
            let row = basis.eval_row(&batch.points.point(i)).unwrap();
            let s: f64 = row.iter().map(|v| batch.weights[i] * v * v).sum();
            assert!((s - target).abs() <= 1e-12 * target);
        }
    }

    #[test]
    fn optimal_density_matches_mixture_chi_square() {
        // density of mu/w for degree-1 Legendre: (1 + 3(2x-1)^2) / 2
        let basis = BasisSet::tensor_legendre(1, 1).unwrap();
        let n = 200_000;
        let batch = sample_optimal(&basis, n, 77).unwrap();
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for &x in batch.points.coord(0) {
            counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
        }
        // cdf F(x) = (x + (2x-1)^3 / 2 + 1/2) / 2
        let cdf = |x: f64| 0.5 * (x + 0.5 * (2.0 * x - 1.0).powi(3) + 0.5);
        let mut chi2 = 0.0;
        for (b, &c) in counts.iter().enumerate() {
            let p = cdf((b + 1) as f64 / bins as f64) - cdf(b as f64 / bins as f64);
            let e = p * n as f64;
            chi2 += (c as f64 - e).powi(2) / e;
        }
        // 19 dof, 99.9% quantile is 43.8
        assert!(chi2 < 43.8, "chi2 = {chi2}");
        assert!(counts[0] > counts[bins / 2] && counts[bins - 1] > counts[bins / 2]);
    }

    #[test]
    fn weighted_gram_matrix_tends_to_identity() {
        // (1/N) sum w phi_a phi_b -> delta_ab within 5 standard errors
        let basis = BasisSet::tensor_legendre(1, 3).unwrap();
        let n = 100_000;
        let batch = sample_optimal(&basis, n, 123).unwrap();
        let m = basis.size();
        for a in 0..m {
            for b in 0..m {
                let vals: Vec<f64> = (0..n)
                    .map(|i| {
                        let row = basis.eval_row(&batch.points.point(i)).unwrap();
                        batch.weights[i] * row[a] * row[b]
                    })
                    .collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let delta = if a == b { 1.0 } else { 0.0 };
                assert!((mean - delta).abs() <= 5.0 * se, "({a},{b}) mean {mean} se {se}");
            }
        }
    }

    #[test]
    fn stuck_sampler_reports_rate() {
        let basis = BasisSet::tensor_legendre(1, 30).unwrap();
        match sample_optimal_with(&basis, 200, 1, 1) {
            Err(Error::SamplerStuck { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected a stuck sampler, got {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn weights_bounded_by_basis_size(x in 0.0f64..=1.0, y in 0.0f64..=1.0, deg in 0u32..6) {
            let basis = BasisSet::tensor_legendre(2, deg).unwrap();
            let w = optimal_weight(&basis, &[x, y]).unwrap();
            proptest::prop_assert!(w > 0.0 && w <= basis.size() as f64 * (1.0 + 1e-15));
        }
    }
}
