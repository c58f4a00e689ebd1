//! The four experiments. Each returns a [`Table`] whose rows follow the
//! config order, whatever order the grid points finish in.

use nalgebra::DMatrix;
use rayon::prelude::*;

use mcls::basis::BasisSet;
use mcls::estimator::{mcls_estimate, IntegralTable, MclsEstimate, SolverConfig};
use mcls::models::{BlackScholesSpec, Model, StochVolModel};
use mcls::pricing::{bs_call_price, implied_vol_for, prepare_batch, reference_price_mc, BsRoute, Payoff, PricingConfig};
use mcls::rng::derive_seed;
use mcls::sampling::{sample_optimal, sample_plain, SamplingLaw, UniformCube, WeightedSampleBatch};

use crate::config::{ExperimentConfig, ExperimentKind, ModelKind, PayoffKind, Schedule, TestFunction};
use crate::CliError;

// stream labels under the run seed
const OPTIMAL_STREAM: u64 = 1;
const PLAIN_STREAM: u64 = 2;
const REK_STREAM: u64 = 3;
const REFERENCE_STREAM: u64 = 4;

/// `int_{[0,1]^d} sin(x_1 + ... + x_d) dx`.
///
/// The integral is `Im(z^d)` with `z = (e^i - 1)/i = 2 sin(1/2) e^{i/2}`,
/// which gives `(2 sin(1/2))^d sin(d/2)` for every `d`.
pub fn sin_reference(d: usize) -> f64 {
    (2.0 * 0.5f64.sin()).powi(d as i32) * (0.5 * d as f64).sin()
}

/// A CSV table plus the number of solves that missed their tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub non_converged: usize,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        let mut header: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
        header.extend(["config_hash", "seed", "solver", "flops"].map(String::from));
        Self { header, rows: Vec::new(), non_converged: 0 }
    }

    fn push(&mut self, cfg: &ExperimentConfig, hash: &str, mut values: Vec<String>, est: &MclsEstimate) {
        values.push(hash.to_string());
        values.push(cfg.seed.to_string());
        values.push(est.solution.solver.to_string());
        values.push(est.flop_count.to_string());
        if !est.solution.converged {
            self.non_converged += 1;
        }
        self.rows.push(values);
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn solver_config(cfg: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        choice: cfg.solver,
        storable_limit: cfg.storable_limit,
        cg_tol: cfg.cg_tol,
        rek_eps: cfg.rek_eps,
        rek_seed: derive_seed(cfg.seed, REK_STREAM),
        ..SolverConfig::default()
    }
}

/// Seed of the grid point with sample size `n`; independent of the rest of
/// the grid so rows can be compared across configs.
fn point_seed(seed: u64, n: usize) -> u64 {
    derive_seed(seed, n as u64)
}

/// MCLS on one batch against plain MC on an independent batch of the same size.
#[derive(Clone, Debug)]
pub struct IntegratePoint {
    pub mcls: MclsEstimate,
    pub mc: MclsEstimate,
    pub exact: f64,
}

impl IntegratePoint {
    pub fn mcls_error(&self) -> f64 {
        (self.mcls.value - self.exact).abs()
    }

    pub fn mc_error(&self) -> f64 {
        (self.mc.value - self.exact).abs()
    }

    pub fn mcls_ci_width(&self) -> f64 {
        self.mcls.ci_high - self.mcls.ci_low
    }

    pub fn mc_ci_width(&self) -> f64 {
        self.mc.ci_high - self.mc.ci_low
    }
}

/// Tensor-Legendre MCLS of `f` on `[0,1]^d` at one grid point.
pub fn integrate_point(
    f: TestFunction,
    d: usize,
    degree: u32,
    n: usize,
    seed: u64,
    sampling: SamplingLaw,
    solver: &SolverConfig,
) -> Result<IntegratePoint, CliError> {
    let basis = BasisSet::tensor_legendre(d, degree)?;
    let table = IntegralTable::orthonormal(basis.size());
    let batch = match sampling {
        SamplingLaw::OptimalWeighted => sample_optimal(&basis, n, derive_seed(seed, OPTIMAL_STREAM))?,
        SamplingLaw::Plain => sample_plain(&UniformCube { dim: d }, n, derive_seed(seed, OPTIMAL_STREAM))?,
    };
    let eval = |x: &[f64]| f.eval(x);
    let mcls = mcls_estimate(eval, &basis, &batch, &table, solver)?;
    let mc = plain_mc(&eval, d, n, derive_seed(seed, PLAIN_STREAM), solver)?;
    Ok(IntegratePoint { mcls, mc, exact: f.exact_integral(d) })
}

/// The sin benchmark at one `(d, degree, N)`: optimal weighted sampling for
/// MCLS, uniform sampling for MC.
pub fn sin_benchmark_point(d: usize, degree: u32, n: usize, seed: u64, solver: &SolverConfig) -> Result<IntegratePoint, CliError> {
    integrate_point(TestFunction::SinSum, d, degree, n, seed, SamplingLaw::OptimalWeighted, solver)
}

fn plain_mc<F: Fn(&[f64]) -> f64 + Sync>(f: &F, d: usize, n: usize, seed: u64, solver: &SolverConfig) -> Result<MclsEstimate, CliError> {
    let batch = sample_plain(&UniformCube { dim: d }, n, seed)?;
    let basis = BasisSet::tensor_legendre(d, 0)?;
    Ok(mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(1), solver)?)
}

fn grid(cfg: &ExperimentConfig) -> Vec<(usize, u32)> {
    cfg.n_grid.iter().flat_map(|&n| cfg.degrees.iter().map(move |&k| (n, k))).collect()
}

pub fn run(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    match cfg.kind {
        ExperimentKind::Integrate => run_integrate(cfg),
        ExperimentKind::SinBenchmark => run_sin_benchmark(cfg),
        ExperimentKind::CostCurve => run_cost_curve(cfg),
        ExperimentKind::Price => run_price(cfg),
    }
}

pub fn run_sin_benchmark(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let solver = solver_config(cfg);
    let points: Vec<IntegratePoint> = grid(cfg)
        .into_par_iter()
        .map(|(n, k)| sin_benchmark_point(cfg.dim, k, n, point_seed(cfg.seed, n), &solver))
        .collect::<Result<_, _>>()?;
    let hash = cfg.hash();
    let mut table = Table::new(&["N", "degree", "mcls_error", "mc_error", "mcls_ci_width", "mc_ci_width"]);
    for ((n, k), p) in grid(cfg).into_iter().zip(&points) {
        let row = vec![
            n.to_string(),
            k.to_string(),
            num(p.mcls_error()),
            num(p.mc_error()),
            num(p.mcls_ci_width()),
            num(p.mc_ci_width()),
        ];
        table.push(cfg, &hash, row, &p.mcls);
    }
    Ok(table)
}

pub fn run_integrate(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let solver = solver_config(cfg);
    let points: Vec<IntegratePoint> = grid(cfg)
        .into_par_iter()
        .map(|(n, k)| integrate_point(cfg.function, cfg.dim, k, n, point_seed(cfg.seed, n), cfg.sampling, &solver))
        .collect::<Result<_, _>>()?;
    let hash = cfg.hash();
    let mut table =
        Table::new(&["N", "degree", "estimate", "abs_error", "ci_width", "mc_estimate", "mc_error", "mc_ci_width", "exact"]);
    for ((n, k), p) in grid(cfg).into_iter().zip(&points) {
        let row = vec![
            n.to_string(),
            k.to_string(),
            num(p.mcls.value),
            num(p.mcls_error()),
            num(p.mcls_ci_width()),
            num(p.mc.value),
            num(p.mc_error()),
            num(p.mc_ci_width()),
            num(p.exact),
        ];
        table.push(cfg, &hash, row, &p.mcls);
    }
    Ok(table)
}

/// Error against cost for each basis-size schedule. `n = 0` is plain MC.
pub fn run_cost_curve(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let solver = solver_config(cfg);
    let jobs: Vec<(usize, Schedule)> =
        cfg.n_grid.iter().flat_map(|&n| cfg.schedules.iter().map(move |&s| (n, s))).collect();
    let exact = cfg.function.exact_integral(cfg.dim);
    let results: Vec<MclsEstimate> = jobs
        .par_iter()
        .map(|&(big_n, sched)| -> Result<MclsEstimate, CliError> {
            let basis = BasisSet::tensor_legendre_with_size(cfg.dim, sched.n_at(big_n) + 1)?;
            let seed = derive_seed(point_seed(cfg.seed, big_n), OPTIMAL_STREAM);
            let batch = match cfg.sampling {
                SamplingLaw::OptimalWeighted => sample_optimal(&basis, big_n, seed)?,
                SamplingLaw::Plain => sample_plain(&UniformCube { dim: cfg.dim }, big_n, seed)?,
            };
            let f = |x: &[f64]| cfg.function.eval(x);
            Ok(mcls_estimate(f, &basis, &batch, &IntegralTable::orthonormal(basis.size()), &solver)?)
        })
        .collect::<Result<_, _>>()?;
    let hash = cfg.hash();
    let mut table = Table::new(&["N", "schedule", "n", "error", "ci_width"]);
    for (&(big_n, sched), est) in jobs.iter().zip(&results) {
        let row = vec![
            big_n.to_string(),
            sched.label(),
            est.n.to_string(),
            num((est.value - exact).abs()),
            num(est.ci_high - est.ci_low),
        ];
        table.push(cfg, &hash, row, est);
    }
    Ok(table)
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<Model, CliError> {
    Ok(match cfg.model {
        ModelKind::Heston => Model::StochVol(StochVolModel::Heston(cfg.heston)),
        ModelKind::Jacobi => Model::StochVol(StochVolModel::Jacobi(cfg.jacobi)),
        ModelKind::BlackScholes => {
            let d = cfg.dim;
            let corr = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { cfg.rho });
            Model::BlackScholes(BlackScholesSpec::new(vec![cfg.s0; d], vec![cfg.sigma; d], corr, cfg.r)?)
        }
    })
}

pub fn build_payoff(cfg: &ExperimentConfig) -> Payoff {
    match (cfg.payoff, cfg.model) {
        (PayoffKind::Call, ModelKind::BlackScholes) => Payoff::Basket { weights: vec![1.0], strike: cfg.strike },
        (PayoffKind::Call, _) => Payoff::CallLogPrice { k: cfg.strike },
        (PayoffKind::Basket, _) => Payoff::equal_basket(cfg.dim, cfg.strike),
        (PayoffKind::Rainbow, _) => Payoff::RainbowMinPut { strike: cfg.strike },
    }
}

/// Closed form for a single-asset Black-Scholes call, plain MC otherwise.
pub fn reference_price(cfg: &ExperimentConfig, model: &Model, payoff: &Payoff) -> Result<f64, CliError> {
    if let (Model::BlackScholes(spec), Some(k)) = (model, payoff.call_strike()) {
        if spec.dim() == 1 {
            return Ok(bs_call_price(spec.s0[0], k, spec.r, spec.sigma[0], cfg.maturity));
        }
    }
    let seed = derive_seed(cfg.seed, REFERENCE_STREAM);
    Ok(reference_price_mc(model, payoff, cfg.maturity, cfg.reference_paths, cfg.steps, seed)?.price)
}

pub fn pricing_config(cfg: &ExperimentConfig, n: usize, degree: u32) -> PricingConfig {
    PricingConfig {
        degree,
        n_samples: n,
        maturity: cfg.maturity,
        time_steps: cfg.steps,
        seed: point_seed(cfg.seed, n),
        solver: solver_config(cfg),
        bs_route: if cfg.cube_route { BsRoute::Cube } else { BsRoute::Direct },
        cube_sampling: cfg.sampling,
    }
}

/// One row per `(N, degree)`. All degrees at a given `N` share a batch,
/// except on the optimally sampled cube route where the law depends on the
/// degree.
pub fn run_price(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = build_model(cfg)?;
    let payoff = build_payoff(cfg);
    let reference = reference_price(cfg, &model, &payoff)?;
    let ref_iv = implied_vol_for(&model, &payoff, cfg.maturity, reference);
    let per_degree = cfg.cube_route && cfg.sampling == SamplingLaw::OptimalWeighted;
    let solver = solver_config(cfg);

    let reports = cfg
        .n_grid
        .par_iter()
        .map(|&n| -> Result<Vec<_>, CliError> {
            let shared = if per_degree { None } else { Some(prepare_batch(&model, &payoff, &pricing_config(cfg, n, 0))?) };
            cfg.degrees
                .iter()
                .map(|&k| {
                    let report = match &shared {
                        Some(b) => b.estimate(k, &solver)?,
                        None => prepare_batch(&model, &payoff, &pricing_config(cfg, n, k))?.estimate(k, &solver)?,
                    };
                    Ok(report.with_reference(reference))
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let hash = cfg.hash();
    let mut table = Table::new(&[
        "N",
        "degree",
        "price",
        "abs_error",
        "ci_width",
        "implied_vol",
        "implied_vol_error",
        "reference_price",
        "clamp_events",
    ]);
    for (&n, row_reports) in cfg.n_grid.iter().zip(&reports) {
        for (&k, r) in cfg.degrees.iter().zip(row_reports) {
            let iv_err = match (r.implied_vol, ref_iv) {
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            };
            let row = vec![
                n.to_string(),
                k.to_string(),
                num(r.price),
                opt(r.abs_error),
                num(r.ci_width()),
                opt(r.implied_vol),
                opt(iv_err),
                num(reference),
                r.clamp_events.map(|c| c.to_string()).unwrap_or_default(),
            ];
            table.push(cfg, &hash, row, &r.estimate);
        }
    }
    Ok(table)
}

/// Plain batch helper for callers that want MC on the unit cube.
pub fn uniform_batch(d: usize, n: usize, seed: u64) -> Result<WeightedSampleBatch, CliError> {
    Ok(sample_plain(&UniformCube { dim: d }, n, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating_sum(d: usize) -> f64 {
        let mut binom = 1.0;
        let mut s = 0.0;
        for j in 1..=d {
            binom *= (d + 1 - j) as f64 / j as f64;
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * binom * (j as f64).sin();
        }
        s
    }

    #[test]
    fn sin_reference_values() {
        assert!((sin_reference(1) - (1.0 - 1f64.cos())).abs() < 1e-15);
        assert!((sin_reference(2) - (2.0 * 1f64.sin() - 2f64.sin())).abs() < 1e-15);
        assert!((sin_reference(2) - 0.773_644_5).abs() < 1e-7);
        for d in [2, 6, 10, 14] {
            assert!((sin_reference(d) - alternating_sum(d)).abs() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn sin_reference_matches_quadrature() {
        // midpoint rule on a 2000 x 2000 grid, error O(h^2)
        let m = 2000;
        let h = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += ((i as f64 + 0.5) * h + (j as f64 + 0.5) * h).sin();
            }
        }
        assert!((s * h * h - sin_reference(2)).abs() < 1e-7);
    }

    #[test]
    fn degree_zero_cost_curve_is_mc() {
        let mut map = std::collections::BTreeMap::new();
        map.insert("schedules".to_string(), "mc".to_string());
        map.insert("sampling".to_string(), "plain".to_string());
        map.insert("n_grid".to_string(), "500".to_string());
        let cfg = ExperimentConfig::from_map(ExperimentKind::CostCurve, &map).unwrap();
        let t = run_cost_curve(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0][2], "0");
        let batch = uniform_batch(1, 500, derive_seed(point_seed(cfg.seed, 500), OPTIMAL_STREAM)).unwrap();
        let mean = batch.points.coord(0).iter().map(|&x| (30.0 * x).sin()).sum::<f64>() / 500.0;
        let err: f64 = t.rows[0][3].parse().unwrap();
        assert!((err - (mean - TestFunction::Sin30.exact_integral(1)).abs()).abs() < 1e-12);
    }
}
