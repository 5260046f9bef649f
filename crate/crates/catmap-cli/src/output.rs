//! Artifact files of one run. Every file carries the config hash.

use crate::config::ExperimentConfig;
use crate::error::CliError;
use serde_json::{json, Value};
use std::path::Path;

/// Tabular and summary results of one experiment.
pub struct RunResult {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
    /// One line for the terminal.
    pub headline: String,
    /// Extra binary artifacts, e.g. a Husimi PGM with the hash in its header.
    pub extra: Vec<(String, Vec<u8>)>,
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_run(dir: &Path, cfg: &ExperimentConfig, res: &RunResult) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let echo = json!({ "config_hash": hash, "config": cfg });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&echo).expect("json") + "\n")?;

    let mut wr = csv::Writer::from_path(dir.join("results.csv"))?;
    let mut header = vec!["config_hash"];
    header.extend(res.headers.iter().copied());
    wr.write_record(&header)?;
    for row in &res.rows {
        let mut rec = vec![hash.clone()];
        rec.extend(row.iter().cloned());
        wr.write_record(&rec)?;
    }
    wr.flush()?;

    let summary = json!({ "experiment": cfg.experiment().name(), "config_hash": hash, "summary": res.summary });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    for (name, bytes) in &res.extra {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}
