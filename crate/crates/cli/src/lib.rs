//! Experiment driver for `mcls`: flat configs in, headered CSV out.

pub mod config;
pub mod experiments;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Run(#[from] mcls::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0} least-squares solve(s) did not converge")]
    NonConvergence(usize),
}

impl CliError {
    /// 2 for bad configs, 3 when a solver failed to converge, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}
