//! results.csv, results.json and plot-data files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{CellError, GroundTruth, ResultTable};

pub const CSV_HEADER: [&str; 6] = ["estimator", "n", "metric", "mean", "stderr", "trials"];

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub plots: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonRow {
    pub estimator: String,
    pub n: usize,
    pub metric: String,
    pub mean: f64,
    /// `None` when undefined (a single trial).
    pub stderr: Option<f64>,
    pub trials: usize,
}

/// Layout of results.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub ground_truth: GroundTruth,
    pub rows: Vec<JsonRow>,
    pub errors: Vec<CellError>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Writes the CSV table to any sink.
pub fn write_results_csv<W: Write>(table: &ResultTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.estimator.clone(),
            r.n.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn file_stem(estimator: &str, metric: &str) -> String {
    format!("{}_{metric}", estimator.replace(':', "-"))
}

/// Writes results.csv, results.json and `plot/<estimator>_<metric>.dat`
/// (columns `n mean stderr`) under `dir`.
pub fn emit_outputs(table: &ResultTable, config: &ExperimentConfig, dir: &Path) -> Result<OutputFiles> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("result table is empty".into()));
    }
    let plot_dir = dir.join("plot");
    fs::create_dir_all(&plot_dir)?;

    let csv = dir.join("results.csv");
    write_results_csv(table, fs::File::create(&csv)?)?;

    let report = JsonReport {
        config: config.clone(),
        master_seed: config.master_seed,
        ground_truth: table.ground_truth.clone(),
        rows: table
            .rows
            .iter()
            .map(|r| JsonRow {
                estimator: r.estimator.clone(),
                n: r.n,
                metric: r.metric.clone(),
                mean: r.mean,
                stderr: finite(r.stderr),
                trials: r.trials,
            })
            .collect(),
        errors: table.errors.clone(),
    };
    let json = dir.join("results.json");
    fs::write(&json, serde_json::to_string_pretty(&report)?)?;

    let mut plots = Vec::new();
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in &table.rows {
        if !keys.contains(&(r.estimator.as_str(), r.metric.as_str())) {
            keys.push((r.estimator.as_str(), r.metric.as_str()));
        }
    }
    for (estimator, metric) in keys {
        let path = plot_dir.join(format!("{}.dat", file_stem(estimator, metric)));
        let mut text = format!("# {estimator} {metric}\n# n mean stderr\n");
        for r in table.rows.iter().filter(|r| r.estimator == estimator && r.metric == metric) {
            text.push_str(&format!("{} {} {}\n", r.n, r.mean, r.stderr));
        }
        fs::write(&path, text)?;
        plots.push(path);
    }
    Ok(OutputFiles { csv, json, plots })
}

/// Reads the config echoed in a results.json.
pub fn config_from_report(json: &str) -> Result<ExperimentConfig> {
    let report: JsonReport = serde_json::from_str(json)?;
    report.config.validate()?;
    Ok(report.config)
}
