//! European option pricing with MCLS.
//!
//! Terminal states are sampled exactly (Black-Scholes) or by Euler-Maruyama
//! (Heston, Jacobi), the payoff is regressed on a polynomial basis and the
//! fit is integrated exactly: through orthonormality for Gram-Schmidt and
//! Legendre bases, through the moment formula for monomial bases.

use rayon::prelude::*;

use crate::basis::{gram_schmidt, BasisSet, InnerProductOracle};
use crate::error::{Error, Result};
use crate::estimator::{evaluate_integrand, mcls_estimate_values, IntegralTable, MclsEstimate, SolverConfig};
use crate::models::{
    build_generator_bs, build_generator_poly, simulate_gbm_terminal, simulate_terminal, BlackScholesSpec, Model,
    StochVolModel,
};
use crate::normal;
use crate::points::PointSet;
use crate::rng::stream_rng;
use crate::sampling::{sample_optimal, sample_plain, SamplingLaw, UniformCube, WeightedSampleBatch};

// paths per sequential chunk of the reference simulation
const REFERENCE_CHUNK: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub enum Payoff {
    /// `(e^x - e^k)^+` of the log-price `x`.
    CallLogPrice { k: f64 },
    /// `(sum w_i s_i - K)^+`.
    Basket { weights: Vec<f64>, strike: f64 },
    /// `(K - min_i s_i)^+`.
    RainbowMinPut { strike: f64 },
}

impl Payoff {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::CallLogPrice { k } if !k.is_finite() => Err(Error::InvalidInput("log-strike must be finite".into())),
            Self::Basket { weights, strike } => {
                if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || !strike.is_finite() {
                    Err(Error::InvalidInput("basket weights must be non-negative and finite".into()))
                } else {
                    Ok(())
                }
            }
            Self::RainbowMinPut { strike } if !strike.is_finite() => {
                Err(Error::InvalidInput("strike must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Equally weighted basket on `d` assets.
    pub fn equal_basket(d: usize, strike: f64) -> Self {
        Self::Basket { weights: vec![1.0 / d as f64; d], strike }
    }

    /// Payoff as a function of asset prices.
    pub fn eval_prices(&self, s: &[f64]) -> f64 {
        match self {
            Self::CallLogPrice { k } => (s[0] - k.exp()).max(0.0),
            _ => eval_payoff(self, s),
        }
    }

    /// Strike of a single-asset call, if this is one.
    pub fn call_strike(&self) -> Option<f64> {
        match self {
            Self::CallLogPrice { k } => Some(k.exp()),
            Self::Basket { weights, strike } if weights.len() == 1 && weights[0] == 1.0 => Some(*strike),
            _ => None,
        }
    }
}

/// Payoff at `state`: the log-price for [`Payoff::CallLogPrice`], asset
/// prices otherwise.
pub fn eval_payoff(p: &Payoff, state: &[f64]) -> f64 {
    match p {
        Payoff::CallLogPrice { k } => (state[0].exp() - k.exp()).max(0.0),
        Payoff::Basket { weights, strike } => {
            let b: f64 = weights.iter().zip(state).map(|(w, s)| w * s).sum();
            (b - strike).max(0.0)
        }
        Payoff::RainbowMinPut { strike } => {
            let m = state.iter().copied().fold(f64::INFINITY, f64::min);
            (strike - m).max(0.0)
        }
    }
}

pub fn bs_call_price(s0: f64, k: f64, r: f64, sigma: f64, t: f64) -> f64 {
    let df = (-r * t).exp();
    let intrinsic = (s0 - k * df).max(0.0);
    let sd = sigma * t.sqrt();
    if !(sd > 0.0) {
        return intrinsic;
    }
    let d1 = ((s0 / k).ln() + (r + 0.5 * sigma * sigma) * t) / sd;
    let d2 = d1 - sd;
    s0 * normal::cdf(d1) - k * df * normal::cdf(d2)
}

/// Black-Scholes volatility reproducing `price`, by bisection until the
/// price matches within `1e-12 s0`.
pub fn implied_vol(price: f64, s0: f64, k: f64, r: f64, t: f64) -> Result<f64> {
    let lower = (s0 - k * (-r * t).exp()).max(0.0);
    let upper = s0;
    if !(price > lower && price < upper) {
        return Err(Error::NoImpliedVol { price, lower, upper });
    }
    let tol = 1e-12 * s0;
    let (mut lo, mut hi) = (0.0, 1.0);
    while bs_call_price(s0, k, r, hi, t) < price {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoImpliedVol { price, lower, upper });
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        let p = bs_call_price(s0, k, r, mid, t);
        if (p - price).abs() <= tol || hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
        if p < price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Payoff at `S = s0 exp((r - sigma^2/2) T + sigma sqrt(T) L Phi^{-1}(x))`
/// for `x` in the open unit cube.
pub fn bs_cube_integrand(spec: &BlackScholesSpec, payoff: &Payoff, t: f64, x: &[f64]) -> Result<f64> {
    let d = spec.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
    }
    let mut z = vec![0.0; d];
    let mut s = vec![0.0; d];
    cube_to_prices(spec, t, x, &mut z, &mut s)?;
    Ok(payoff.eval_prices(&s))
}

fn cube_to_prices(spec: &BlackScholesSpec, t: f64, x: &[f64], z: &mut [f64], s: &mut [f64]) -> Result<()> {
    for (k, (&xk, zk)) in x.iter().zip(z.iter_mut()).enumerate() {
        if !(xk > 0.0 && xk < 1.0) {
            return Err(Error::Domain { coordinate: k, value: xk });
        }
        *zk = normal::inv_cdf(xk);
    }
    spec.terminal_into(t, z, s);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsRoute {
    /// Exact `S_T` samples, monomial basis in prices, moment-formula integrals.
    Direct,
    /// Tensor-Legendre basis on the unit cube after the inverse-normal map.
    Cube,
}

#[derive(Clone, Copy, Debug)]
pub struct PricingConfig {
    pub degree: u32,
    pub n_samples: usize,
    pub maturity: f64,
    /// Euler steps for the stochastic volatility models.
    pub time_steps: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub bs_route: BsRoute,
    /// Sampling law on the cube route.
    pub cube_sampling: SamplingLaw,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            n_samples: 10_000,
            maturity: 1.0,
            time_steps: 100,
            seed: 0,
            solver: SolverConfig::default(),
            bs_route: BsRoute::Direct,
            cube_sampling: SamplingLaw::OptimalWeighted,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PriceReport {
    /// `e^{-rT} estimate.value`.
    pub price: f64,
    pub estimate: MclsEstimate,
    pub implied_vol: Option<f64>,
    pub reference_price: Option<f64>,
    pub abs_error: Option<f64>,
    /// Clamped square roots in the Euler scheme.
    pub clamp_events: Option<u64>,
    /// `e^{-rT}`.
    pub discount: f64,
}

impl PriceReport {
    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference_price = Some(reference);
        self.abs_error = Some((self.price - reference).abs());
        self
    }

    /// Width of the discounted confidence interval.
    pub fn ci_width(&self) -> f64 {
        self.discount * (self.estimate.ci_high - self.estimate.ci_low)
    }
}

/// A simulated batch with cached payoffs, reusable across basis degrees.
#[derive(Clone, Debug)]
pub struct PricingBatch {
    model: Model,
    payoff: Payoff,
    maturity: f64,
    route: Route,
    batch: WeightedSampleBatch,
    f_values: Vec<f64>,
    clamp_events: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Route {
    StochVol,
    BsDirect,
    BsCube,
}

fn check_inputs(model: &Model, payoff: &Payoff, cfg: &PricingConfig) -> Result<()> {
    payoff.validate()?;
    if !(cfg.maturity > 0.0 && cfg.maturity.is_finite()) {
        return Err(Error::InvalidInput("maturity must be positive".into()));
    }
    if cfg.n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let need = model.n_assets();
    let have = match payoff {
        Payoff::CallLogPrice { .. } => 1,
        Payoff::Basket { weights, .. } => weights.len(),
        Payoff::RainbowMinPut { .. } => need,
    };
    if have != need {
        return Err(Error::DimensionMismatch { expected: need, actual: have });
    }
    Ok(())
}

/// Draws the terminal states and evaluates the payoff.
pub fn prepare_batch(model: &Model, payoff: &Payoff, cfg: &PricingConfig) -> Result<PricingBatch> {
    check_inputs(model, payoff, cfg)?;
    let t = cfg.maturity;
    let (route, batch, f_values, clamp_events) = match model {
        Model::StochVol(m) => {
            let paths = simulate_terminal(m, t, cfg.time_steps, cfg.n_samples, cfg.seed)?;
            let x = paths.log_price().to_vec();
            let f: Vec<f64> = x
                .iter()
                .map(|&xi| match payoff {
                    Payoff::CallLogPrice { .. } => eval_payoff(payoff, &[xi]),
                    _ => eval_payoff(payoff, &[xi.exp()]),
                })
                .collect();
            let batch = WeightedSampleBatch::plain_from_points(PointSet::from_scalars(x), cfg.seed)?;
            (Route::StochVol, batch, f, Some(paths.clamp_events))
        }
        Model::BlackScholes(spec) => match cfg.bs_route {
            BsRoute::Direct => {
                let pts = simulate_gbm_terminal(spec, t, cfg.n_samples, cfg.seed)?;
                let batch = WeightedSampleBatch::plain_from_points(pts, cfg.seed)?;
                let f = evaluate_integrand(&|s: &[f64]| payoff.eval_prices(s), &batch);
                (Route::BsDirect, batch, f, None)
            }
            BsRoute::Cube => {
                let d = spec.dim();
                let batch = match cfg.cube_sampling {
                    SamplingLaw::Plain => sample_plain(&UniformCube { dim: d }, cfg.n_samples, cfg.seed)?,
                    SamplingLaw::OptimalWeighted => {
                        sample_optimal(&BasisSet::tensor_legendre(d, cfg.degree)?, cfg.n_samples, cfg.seed)?
                    }
                };
                let f = cube_payoffs(spec, payoff, t, &batch)?;
                (Route::BsCube, batch, f, None)
            }
        },
    };
    Ok(PricingBatch { model: model.clone(), payoff: payoff.clone(), maturity: t, route, batch, f_values, clamp_events })
}

fn cube_payoffs(spec: &BlackScholesSpec, payoff: &Payoff, t: f64, batch: &WeightedSampleBatch) -> Result<Vec<f64>> {
    let d = spec.dim();
    (0..batch.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d], vec![0.0; d]),
            |(x, z, s), i| {
                batch.points.point_into(i, x);
                cube_to_prices(spec, t, x, z, s)?;
                Ok(payoff.eval_prices(s))
            },
        )
        .collect()
}

impl PricingBatch {
    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }

    pub fn batch(&self) -> &WeightedSampleBatch {
        &self.batch
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.f_values
    }

    pub fn discount(&self) -> f64 {
        (-self.model.rate() * self.maturity).exp()
    }

    /// Basis and exact integrals for the route at `degree`.
    pub fn basis_and_table(&self, degree: u32) -> Result<(BasisSet, IntegralTable)> {
        let t = self.maturity;
        match (self.route, &self.model) {
            (Route::StochVol, Model::StochVol(m)) => log_price_basis(m, t, degree),
            (Route::BsDirect, Model::BlackScholes(spec)) => {
                let basis = BasisSet::monomial(spec.dim(), degree)?;
                let g = build_generator_bs(spec, degree)?;
                let row = g.moment_row(t, &spec.s0)?;
                let table = basis
                    .indices()
                    .iter()
                    .map(|e| g.index_of(e.exponents()).map(|j| row[j]))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::InvalidInput("monomial missing from the generator".into()))?;
                Ok((basis, IntegralTable::from_moments(table)?))
            }
            (Route::BsCube, Model::BlackScholes(spec)) => {
                let basis = BasisSet::tensor_legendre(spec.dim(), degree)?;
                let size = basis.size();
                Ok((basis, IntegralTable::orthonormal(size)))
            }
            _ => unreachable!("route always matches the model"),
        }
    }

    pub fn estimate(&self, degree: u32, solver: &SolverConfig) -> Result<PriceReport> {
        let (basis, table) = self.basis_and_table(degree)?;
        let estimate = mcls_estimate_values(&self.f_values, &basis, &self.batch, &table, solver)?;
        let price = self.discount() * estimate.value;
        Ok(PriceReport {
            price,
            estimate,
            implied_vol: self.implied_vol_of(price),
            reference_price: None,
            abs_error: None,
            clamp_events: self.clamp_events,
            discount: self.discount(),
        })
    }

    /// Implied volatility of `price` for single-asset calls.
    pub fn implied_vol_of(&self, price: f64) -> Option<f64> {
        implied_vol_for(&self.model, &self.payoff, self.maturity, price)
    }
}

/// Implied volatility of a single-asset call price under `model`'s spot and
/// rate; `None` for other payoffs or outside the no-arbitrage band.
pub fn implied_vol_for(model: &Model, payoff: &Payoff, t: f64, price: f64) -> Option<f64> {
    let k = payoff.call_strike()?;
    let s0 = match model {
        Model::BlackScholes(s) if s.dim() == 1 => s.s0[0],
        Model::StochVol(m) => m.initial()[1].exp(),
        _ => return None,
    };
    implied_vol(price, s0, k, model.rate(), t).ok()
}

/// Orthonormal polynomials of degree `<= degree` in the terminal log-price,
/// with moments from the `(v, x)` generator at degree `2 degree`.
///
/// Gram-Schmidt runs on `(x/s)^a` with `s^2 = E[x^2]` so the moment matrix
/// is well scaled; the scaling is then folded into the transform.
pub fn log_price_basis(m: &StochVolModel, t: f64, degree: u32) -> Result<(BasisSet, IntegralTable)> {
    let diffusion = Model::StochVol(*m).polynomial_diffusion();
    let g = build_generator_poly(&diffusion, 2 * degree.max(1))?;
    let row = g.moment_row(t, &m.initial())?;
    let moment = |a: u32| row[g.index_of(&[0, a]).expect("generator holds x^a")];
    let s = if moment(2) > 0.0 { moment(2).sqrt() } else { 1.0 };
    let scaled: Vec<f64> = (0..=2 * degree).map(|a| moment(a) / s.powi(a as i32)).collect();
    let raw = BasisSet::monomial(1, degree)?;
    let ortho = gram_schmidt(&raw, &InnerProductOracle::univariate(&scaled)?)?;
    let mut tr = ortho.transform().expect("Gram-Schmidt basis has a transform").clone();
    for (j, e) in raw.indices().iter().enumerate() {
        let f = s.powi(-(e.exponents()[0] as i32));
        tr.column_mut(j).scale_mut(f);
    }
    let basis = BasisSet::with_transform(&raw, tr)?;
    let size = basis.size();
    Ok((basis, IntegralTable::orthonormal(size)))
}

/// Plain discounted Monte Carlo price with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McReference {
    pub price: f64,
    pub std_error: f64,
}

/// Plain MC reference with `n_ref` paths (`ns` Euler steps for stochastic
/// volatility). Memory does not grow with `n_ref`; the result depends only
/// on the seed.
pub fn reference_price_mc(model: &Model, payoff: &Payoff, t: f64, n_ref: usize, ns: usize, seed: u64) -> Result<McReference> {
    let cfg = PricingConfig { maturity: t, n_samples: n_ref.max(1), time_steps: ns, ..Default::default() };
    check_inputs(model, payoff, &cfg)?;
    if n_ref == 0 {
        return Err(Error::InvalidInput("reference needs at least one path".into()));
    }
    if let Model::StochVol(m) = model {
        m.validate()?;
        if ns == 0 {
            return Err(Error::InvalidInput("Euler-Maruyama needs Ns >= 1".into()));
        }
    }
    let chunks = n_ref.div_ceil(REFERENCE_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64)> {
            let start = c * REFERENCE_CHUNK;
            let end = (start + REFERENCE_CHUNK).min(n_ref);
            let d = model.n_assets();
            let mut z = vec![0.0; d];
            let mut s = vec![0.0; d];
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in start..end {
                let mut rng = stream_rng(seed, i as u64);
                let f = match model {
                    Model::StochVol(m) => {
                        let ([_, x], _) = m.simulate_path(t, ns, &mut rng)?;
                        match payoff {
                            Payoff::CallLogPrice { .. } => eval_payoff(payoff, &[x]),
                            _ => eval_payoff(payoff, &[x.exp()]),
                        }
                    }
                    Model::BlackScholes(spec) => {
                        use rand_distr::{Distribution, StandardNormal};
                        for zk in z.iter_mut() {
                            *zk = StandardNormal.sample(&mut rng);
                        }
                        spec.terminal_into(t, &z, &mut s);
                        payoff.eval_prices(&s)
                    }
                };
                s1 += f;
                s2 += f * f;
            }
            Ok((s1, s2))
        })
        .collect::<Result<_>>()?;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_ref as f64;
    let mean = s1 / n;
    let var = if n_ref > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let df = (-model.rate() * t).exp();
    Ok(McReference { price: df * mean, std_error: df * (var / n).sqrt() })
}

/// Steps 1-4 of MCLS pricing at one degree.
pub fn price_european(model: &Model, payoff: &Payoff, cfg: &PricingConfig) -> Result<PriceReport> {
    prepare_batch(model, payoff, cfg)?.estimate(cfg.degree, &cfg.solver)
}
