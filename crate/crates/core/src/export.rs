//! Record, manifest and trajectory files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collapse::TrajectoryPoint;
use crate::ensemble::{EnsembleConfig, EnsembleStats, RecordFormat, RunRecord};
use crate::error::{Error, Result};
use crate::relativity::{self, Frame};

pub const RECORD_COLUMNS: [&str; 8] = [
    "run_index",
    "frame",
    "first_detector",
    "winner",
    "reading_D1",
    "reading_D2",
    "duration_s",
    "within_budget",
];

pub const TRAJECTORY_COLUMNS: [&str; 5] = ["step", "t_model_s", "q", "logw1", "logw2"];

/// Ten significant digits in scientific notation.
fn num(x: f64) -> String {
    format!("{x:.9e}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

pub fn export_records(records: &[RunRecord], path: &Path, format: RecordFormat) -> Result<()> {
    match format {
        RecordFormat::Csv => write_records_csv(records, path),
        RecordFormat::Jsonl => write_records_jsonl(records, path),
    }
}

fn write_records_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(RECORD_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.run_index.to_string(),
            r.frame.to_string(),
            r.first_detector.to_string(),
            r.winner.to_string(),
            opt(r.reading_d1),
            opt(r.reading_d2),
            r.duration_s.map(num).unwrap_or_default(),
            opt(r.within_budget),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_records_jsonl(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Scenario-derived constants recorded alongside a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub c_m_per_s: f64,
    /// Light travel time mirror to detector, s.
    pub t0_s: f64,
    /// Effective collapse rate by frame label, 1/s.
    pub rate_per_frame: BTreeMap<String, f64>,
    pub lorentz_gamma: Option<f64>,
    pub delta_t_s: Option<f64>,
    pub noise: String,
}

impl DerivedConstants {
    pub fn for_config(config: &EnsembleConfig) -> Result<Self> {
        let scenario = config.scenario()?;
        let mut rate_per_frame = BTreeMap::new();
        rate_per_frame.insert("0".to_string(), scenario.rate(&Frame::rest())?);
        let (mut lorentz_gamma, mut delta_t_s) = (None, None);
        if let Some(v) = config.v {
            rate_per_frame.insert("A".to_string(), scenario.rate(&Frame::a(v)?)?);
            rate_per_frame.insert("B".to_string(), scenario.rate(&Frame::b(v)?)?);
            lorentz_gamma = Some(relativity::gamma(v)?);
            delta_t_s = Some(relativity::activation_gap(scenario.d, v)?);
        }
        Ok(Self {
            c_m_per_s: relativity::C,
            t0_s: scenario.d / relativity::C,
            rate_per_frame,
            lorentz_gamma,
            delta_t_s,
            noise: "splitmix64 counter hash, Box-Muller".to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub version: String,
    pub master_seed: u64,
    pub config: EnsembleConfig,
    pub derived: DerivedConstants,
    pub records_file: String,
    pub stats: EnsembleStats,
}

impl Manifest {
    pub fn new(config: &EnsembleConfig, stats: &EnsembleStats, records_file: &str) -> Result<Self> {
        Ok(Self {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            config: config.clone(),
            derived: DerivedConstants::for_config(config)?,
            records_file: records_file.to_string(),
            stats: stats.clone(),
        })
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_trajectory_csv(points: &[TrajectoryPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TRAJECTORY_COLUMNS).map_err(|e| csv_err(path, e))?;
    for p in points {
        w.write_record([
            p.step.to_string(),
            num(p.t_model_s),
            num(p.q),
            num(p.logw1),
            num(p.logw2),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
