//! Self-describing JSON summaries and CSV tables.

use std::fs::File;
use std::path::Path;

use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;

/// Every JSON report: what produced it and from which configuration.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub config: &'a Config,
    pub result: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(command: &'static str, config: &'a Config, result: T) -> Self {
        Self {
            tool: "aloocv",
            version: aloocv::VERSION,
            command,
            config_hash: config.hash(),
            seed: config.dataset.seed,
            config,
            result,
        }
    }
}

/// Writes `value` as pretty JSON to `path` and echoes it to stdout.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

/// Writes a header and rows of already-formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trippable text for a float; empty for missing values.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}
