//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use mcls::estimator::SolverChoice;
use mcls::models::{HestonSpec, JacobiSpec};
use mcls::rng::derive_seed;
use mcls::sampling::SamplingLaw;

use crate::CliError;

pub const DEFAULT_N_GRID: [usize; 7] = [100, 215, 464, 1000, 2154, 4642, 10000];
pub const DEFAULT_DEGREES: [u32; 4] = [0, 1, 3, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Integrate,
    Price,
    SinBenchmark,
    CostCurve,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Integrate => "integrate",
            Self::Price => "price",
            Self::SinBenchmark => "sin-benchmark",
            Self::CostCurve => "cost-curve",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "integrate" | "integrate-cube" => Ok(Self::Integrate),
            "price" => Ok(Self::Price),
            "sin-benchmark" => Ok(Self::SinBenchmark),
            "cost-curve" => Ok(Self::CostCurve),
            _ => Err(CliError::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

/// Integrands on the unit cube with known integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    /// `sin(sum_j x_j)`
    SinSum,
    /// `sin(30 x_1)`
    Sin30,
    /// `sum_j exp(-|x_j - 1/2|)`
    ExpAbs,
}

impl TestFunction {
    pub fn name(self) -> &'static str {
        match self {
            Self::SinSum => "sin-sum",
            Self::Sin30 => "sin30",
            Self::ExpAbs => "exp-abs",
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Self::SinSum => x.iter().sum::<f64>().sin(),
            Self::Sin30 => (30.0 * x[0]).sin(),
            Self::ExpAbs => x.iter().map(|v| (-(v - 0.5).abs()).exp()).sum(),
        }
    }

    pub fn exact_integral(self, d: usize) -> f64 {
        match self {
            Self::SinSum => crate::experiments::sin_reference(d),
            Self::Sin30 => (1.0 - 30f64.cos()) / 30.0,
            Self::ExpAbs => d as f64 * 2.0 * (1.0 - (-0.5f64).exp()),
        }
    }
}

impl FromStr for TestFunction {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "sin-sum" => Ok(Self::SinSum),
            "sin30" => Ok(Self::Sin30),
            "exp-abs" => Ok(Self::ExpAbs),
            _ => Err(CliError::Config(format!("unknown function '{s}'"))),
        }
    }
}

/// Basis size as a function of `N` in the cost curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Mc,
    Fixed(usize),
    Sqrt,
    NOverLog,
}

impl Schedule {
    /// `n` (basis size minus one) at sample size `big_n`.
    pub fn n_at(self, big_n: usize) -> usize {
        let nf = big_n as f64;
        let n = match self {
            Self::Mc => 0,
            Self::Fixed(n) => n,
            Self::Sqrt => nf.sqrt().floor() as usize,
            Self::NOverLog => (nf / nf.ln()).floor() as usize,
        };
        // keep at least one residual degree of freedom
        n.min(big_n.saturating_sub(2))
    }

    pub fn label(self) -> String {
        match self {
            Self::Mc => "mc".into(),
            Self::Fixed(n) => format!("fixed:{n}"),
            Self::Sqrt => "sqrt".into(),
            Self::NOverLog => "n-log".into(),
        }
    }
}

impl FromStr for Schedule {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "mc" => Ok(Self::Mc),
            "sqrt" => Ok(Self::Sqrt),
            "n-log" => Ok(Self::NOverLog),
            _ => match s.strip_prefix("fixed:").map(str::parse) {
                Some(Ok(n)) => Ok(Self::Fixed(n)),
                _ => Err(CliError::Config(format!("unknown schedule '{s}'"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    BlackScholes,
    Heston,
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayoffKind {
    Call,
    Basket,
    Rainbow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n_grid: Vec<usize>,
    pub degrees: Vec<u32>,
    pub solver: SolverChoice,
    pub storable_limit: u64,
    pub rek_eps: f64,
    pub cg_tol: f64,
    pub dim: usize,
    pub function: TestFunction,
    pub sampling: SamplingLaw,
    pub schedules: Vec<Schedule>,
    pub model: ModelKind,
    pub payoff: PayoffKind,
    /// Log-strike for `call` on Heston/Jacobi, strike otherwise.
    pub strike: f64,
    pub maturity: f64,
    pub steps: usize,
    pub s0: f64,
    pub sigma: f64,
    pub r: f64,
    pub rho: f64,
    pub heston: HestonSpec,
    pub jacobi: JacobiSpec,
    pub cube_route: bool,
    pub reference_paths: usize,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| CliError::Config(format!("invalid value '{v}' for '{key}'"))))
        .transpose()
}

fn parse_list<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<T>>, CliError> {
    map.get(key)
        .map(|v| {
            v.split(',')
                .map(|s| s.trim().parse::<T>().map_err(|_| CliError::Config(format!("invalid entry '{s}' in '{key}'"))))
                .collect()
        })
        .transpose()
}

const KNOWN_KEYS: &[&str] = &[
    "experiment", "seed", "n_grid", "degree", "degrees", "solver", "storable_limit", "rek_eps", "cg_tol", "dim",
    "function", "sampling", "schedules", "model", "payoff", "strike", "maturity", "steps", "s0", "sigma", "r", "rho",
    "kappa", "theta", "vol_of_vol", "v0", "x0", "vmin", "vmax", "route", "reference_paths",
];

/// Fixed default seed per experiment name.
pub fn default_seed(kind: ExperimentKind) -> u64 {
    let h = Sha256::digest(kind.name().as_bytes());
    derive_seed(u64::from_le_bytes(h[..8].try_into().expect("8 bytes")), 0)
}

impl ExperimentConfig {
    pub fn from_map(kind: ExperimentKind, map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        if let Some(bad) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key '{bad}'")));
        }
        if let Some(e) = map.get("experiment") {
            if e.parse::<ExperimentKind>()? != kind {
                return Err(CliError::Config(format!("config is for '{e}', not '{}'", kind.name())));
            }
        }
        let model = match map.get("model").map(String::as_str) {
            None | Some("heston") => ModelKind::Heston,
            Some("jacobi") => ModelKind::Jacobi,
            Some("bs") | Some("black-scholes") => ModelKind::BlackScholes,
            Some(m) => return Err(CliError::Config(format!("unknown model '{m}'"))),
        };
        let payoff = match map.get("payoff").map(String::as_str) {
            None | Some("call") => PayoffKind::Call,
            Some("basket") => PayoffKind::Basket,
            Some("rainbow") => PayoffKind::Rainbow,
            Some(p) => return Err(CliError::Config(format!("unknown payoff '{p}'"))),
        };
        let sampling = match map.get("sampling").map(String::as_str) {
            None | Some("optimal") => SamplingLaw::OptimalWeighted,
            Some("plain") => SamplingLaw::Plain,
            Some(s) => return Err(CliError::Config(format!("unknown sampling '{s}'"))),
        };
        let cube_route = match map.get("route").map(String::as_str) {
            None | Some("direct") => false,
            Some("cube") => true,
            Some(s) => return Err(CliError::Config(format!("unknown route '{s}'"))),
        };

        let (def_dim, def_fn, def_degrees, def_maturity): (usize, TestFunction, Vec<u32>, f64) = match kind {
            ExperimentKind::SinBenchmark => (10, TestFunction::SinSum, vec![5], 1.0),
            ExperimentKind::CostCurve => (1, TestFunction::Sin30, vec![0], 1.0),
            ExperimentKind::Integrate => (2, TestFunction::SinSum, vec![3], 1.0),
            ExperimentKind::Price => {
                let t = if model == ModelKind::BlackScholes { 1.0 } else { 1.0 / 12.0 };
                (1, TestFunction::SinSum, DEFAULT_DEGREES.to_vec(), t)
            }
        };
        let def_grid = match kind {
            ExperimentKind::SinBenchmark => vec![1000, 10_000, 100_000],
            _ => DEFAULT_N_GRID.to_vec(),
        };

        let mut degrees = parse_list::<u32>(map, "degrees")?.unwrap_or(def_degrees);
        if let Some(d) = parse::<u32>(map, "degree")? {
            degrees = vec![d];
        }
        let n_grid = parse_list::<usize>(map, "n_grid")?.unwrap_or(def_grid);
        if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
            return Err(CliError::Config("n_grid must be non-empty and strictly increasing".into()));
        }
        if degrees.is_empty() {
            return Err(CliError::Config("at least one degree is required".into()));
        }

        let p = HestonSpec::paper();
        let heston = HestonSpec {
            kappa: parse(map, "kappa")?.unwrap_or(p.kappa),
            theta: parse(map, "theta")?.unwrap_or(p.theta),
            sigma: parse(map, "vol_of_vol")?.unwrap_or(p.sigma),
            rho: parse(map, "rho")?.unwrap_or(p.rho),
            r: parse(map, "r")?.unwrap_or(p.r),
            v0: parse(map, "v0")?.unwrap_or(p.v0),
            x0: parse(map, "x0")?.unwrap_or(p.x0),
        };
        let j = JacobiSpec::paper();
        let jacobi = JacobiSpec {
            kappa: parse(map, "kappa")?.unwrap_or(j.kappa),
            theta: parse(map, "theta")?.unwrap_or(j.theta),
            sigma: parse(map, "vol_of_vol")?.unwrap_or(j.sigma),
            rho: parse(map, "rho")?.unwrap_or(j.rho),
            r: parse(map, "r")?.unwrap_or(j.r),
            v0: parse(map, "v0")?.unwrap_or(j.v0),
            x0: parse(map, "x0")?.unwrap_or(j.x0),
            vmin: parse(map, "vmin")?.unwrap_or(j.vmin),
            vmax: parse(map, "vmax")?.unwrap_or(j.vmax),
        };
        let def_strike = if kind == ExperimentKind::Price && payoff == PayoffKind::Call && model != ModelKind::BlackScholes {
            0.0
        } else {
            1.0
        };

        let cfg = Self {
            kind,
            seed: parse(map, "seed")?.unwrap_or_else(|| default_seed(kind)),
            n_grid,
            degrees,
            solver: parse::<String>(map, "solver")?
                .map(|s| s.parse::<SolverChoice>().map_err(|e| CliError::Config(e.to_string())))
                .transpose()?
                .unwrap_or(if kind == ExperimentKind::CostCurve { SolverChoice::Cg } else { SolverChoice::Auto }),
            storable_limit: parse(map, "storable_limit")?.unwrap_or(mcls::solvers::DEFAULT_STORABLE_LIMIT),
            rek_eps: parse(map, "rek_eps")?.unwrap_or(1e-8),
            cg_tol: parse(map, "cg_tol")?.unwrap_or(1e-10),
            dim: parse(map, "dim")?.unwrap_or(def_dim),
            function: parse::<String>(map, "function")?.map(|s| s.parse()).transpose()?.unwrap_or(def_fn),
            sampling,
            schedules: parse_list::<String>(map, "schedules")?
                .map(|v| v.iter().map(|s| s.parse()).collect::<Result<Vec<Schedule>, _>>())
                .transpose()?
                .unwrap_or_else(|| vec![Schedule::Mc, Schedule::Fixed(50), Schedule::Sqrt, Schedule::NOverLog]),
            model,
            payoff,
            strike: parse(map, "strike")?.unwrap_or(def_strike),
            maturity: parse(map, "maturity")?.unwrap_or(def_maturity),
            steps: parse(map, "steps")?.unwrap_or(100),
            s0: parse(map, "s0")?.unwrap_or(1.0),
            sigma: parse(map, "sigma")?.unwrap_or(0.2),
            r: parse(map, "r")?.unwrap_or(0.01),
            rho: parse(map, "rho")?.unwrap_or(0.0),
            heston,
            jacobi,
            cube_route,
            reference_paths: parse(map, "reference_paths")?.unwrap_or(1_000_000),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    // negated comparisons so that NaN is rejected
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.maturity > 0.0) || self.steps == 0 {
            return bad("maturity and steps must be positive");
        }
        if !(self.rek_eps > 0.0) || !(self.cg_tol > 0.0) {
            return bad("solver tolerances must be positive");
        }
        if self.kind == ExperimentKind::Price {
            match self.model {
                ModelKind::Heston => self.heston.validate().map_err(|e| CliError::Config(e.to_string()))?,
                ModelKind::Jacobi => self.jacobi.validate().map_err(|e| CliError::Config(e.to_string()))?,
                ModelKind::BlackScholes => {
                    if self.payoff == PayoffKind::Call && self.dim != 1 {
                        return bad("call payoff needs dim = 1");
                    }
                }
            }
            if self.model != ModelKind::BlackScholes && self.dim != 1 {
                return bad("stochastic volatility models have a single asset (dim = 1)");
            }
        }
        if self.kind == ExperimentKind::CostCurve && self.schedules.is_empty() {
            return bad("cost-curve needs at least one schedule");
        }
        Ok(())
    }

    /// Every resolved setting, one `key = value` per line in fixed order.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let list = |v: &[String]| v.join(",");
        let _ = writeln!(s, "experiment = {}", self.kind.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_grid = {}", list(&self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "degrees = {}", list(&self.degrees.iter().map(|n| n.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "solver = {:?}", self.solver);
        let _ = writeln!(s, "storable_limit = {}", self.storable_limit);
        let _ = writeln!(s, "rek_eps = {:e}", self.rek_eps);
        let _ = writeln!(s, "cg_tol = {:e}", self.cg_tol);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "function = {}", self.function.name());
        let _ = writeln!(s, "sampling = {:?}", self.sampling);
        let _ = writeln!(s, "schedules = {}", list(&self.schedules.iter().map(|x| x.label()).collect::<Vec<_>>()));
        let _ = writeln!(s, "model = {:?}", self.model);
        let _ = writeln!(s, "payoff = {:?}", self.payoff);
        let _ = writeln!(s, "strike = {}", self.strike);
        let _ = writeln!(s, "maturity = {}", self.maturity);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "s0 = {}\nsigma = {}\nr = {}\nrho = {}", self.s0, self.sigma, self.r, self.rho);
        let _ = writeln!(s, "heston = {:?}", self.heston);
        let _ = writeln!(s, "jacobi = {:?}", self.jacobi);
        let _ = writeln!(s, "route = {}", if self.cube_route { "cube" } else { "direct" });
        let _ = writeln!(s, "reference_paths = {}", self.reference_paths);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
