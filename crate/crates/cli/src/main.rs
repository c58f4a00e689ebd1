use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcls_cli::config::{parse_flat, ExperimentConfig, ExperimentKind};
use mcls_cli::experiments;
use mcls_cli::output::{write_csv, write_outputs};
use mcls_cli::CliError;

#[derive(Parser)]
#[command(name = "mcls", version = env!("MCLS_GIT_DESCRIBE"), about = "Monte Carlo least-squares experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a test function over the unit cube
    Integrate(Common),
    /// Price a European option
    Price(Common),
    /// MCLS against MC for sin(x_1 + ... + x_d)
    SinBenchmark(Common),
    /// Error against flops for several basis-size schedules
    CostCurve(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; a `.manifest` file is written alongside. Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// auto, qr, cg or rek
    #[arg(long)]
    solver: Option<String>,
    /// Largest matrix (in entries) the auto solver will store
    #[arg(long)]
    storable_limit: Option<u64>,
    #[arg(long)]
    degree: Option<u32>,
    /// Comma-separated, strictly increasing sample sizes
    #[arg(long)]
    n_grid: Option<String>,
    /// Any other config key, as `key=value`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut map = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_flat(&text)?
        }
        None => BTreeMap::new(),
    };
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{kv}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    put("seed", c.seed.map(|s| s.to_string()));
    put("solver", c.solver.clone());
    put("storable_limit", c.storable_limit.map(|s| s.to_string()));
    put("degree", c.degree.map(|s| s.to_string()));
    put("n_grid", c.n_grid.clone());
    ExperimentConfig::from_map(kind, &map)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, common) = match &cli.command {
        Command::Integrate(c) => (ExperimentKind::Integrate, c),
        Command::Price(c) => (ExperimentKind::Price, c),
        Command::SinBenchmark(c) => (ExperimentKind::SinBenchmark, c),
        Command::CostCurve(c) => (ExperimentKind::CostCurve, c),
    };
    let cfg = resolve(kind, common)?;
    let table = experiments::run(&cfg)?;
    match &common.out {
        Some(path) => write_outputs(&cfg, &table, path)?,
        None => write_csv(&table, std::io::stdout().lock())?,
    }
    if table.non_converged > 0 {
        return Err(CliError::NonConvergence(table.non_converged));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcls: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
