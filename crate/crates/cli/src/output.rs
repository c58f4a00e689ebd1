use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiments::Table;
use crate::CliError;

pub const GIT_DESCRIBE: &str = env!("MCLS_GIT_DESCRIBE");

pub fn write_csv<W: Write>(table: &Table, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `<out>.manifest` next to the CSV.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

pub fn manifest(cfg: &ExperimentConfig) -> String {
    format!("# mcls {GIT_DESCRIBE}\nconfig_hash = {}\n{}", cfg.hash(), cfg.canonical())
}

/// Writes the CSV and its manifest.
pub fn write_outputs(cfg: &ExperimentConfig, table: &Table, out: &Path) -> Result<(), CliError> {
    write_csv(table, std::fs::File::create(out)?)?;
    std::fs::write(manifest_path(out), manifest(cfg))?;
    Ok(())
}
