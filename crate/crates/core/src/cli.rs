//! Command-line front end.
//!
//! Ensemble subcommands print one JSON summary object on stdout and write
//! `records.<csv|jsonl>` plus `manifest.json` into `--out-dir`. Geometry
//! subcommands print plain tables. Exit status: 0 success, 2 usage or
//! validation error, 1 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::collapse::{trace_to_collapse, ProfilePair};
use crate::ensemble::{
    run_ensemble_with_workers, EnsembleConfig, EnsembleStats, ExperimentKind, RecordFormat,
};
use crate::error::{Error, Result};
use crate::experiment::{active_profiles, DetectorKeys, ScenarioOverrides};
use crate::export::{export_records, write_manifest, write_trajectory_csv, Manifest};
use crate::noise::CounterNoise;
use crate::relativity::{self, parse_velocity, Event, Frame, C};

pub const DEFAULT_RUNS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_Q0: f64 = 0.5;
pub const DEFAULT_D: f64 = 1000.0;
pub const DEFAULT_V: &str = "0.99c";

#[derive(Debug, Parser)]
#[command(name = "grwp", version, about = "Stochastic collapse in relativistically moving frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Event times of both detections in frames 0, A and B.
    Frames {
        #[arg(long, default_value_t = DEFAULT_D, allow_negative_numbers = true)]
        d: f64,
        /// Frame speed, m/s or a fraction of c such as 0.99c.
        #[arg(long, default_value = DEFAULT_V)]
        v: String,
    },
    /// Lorentz-transform one event into a frame moving at v.
    Transform {
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value = DEFAULT_V, allow_negative_numbers = true)]
        v: String,
    },
    /// Detector distance whose activation gap equals a collapse time.
    MinDistance {
        #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
        tau: f64,
        #[arg(long, default_value = DEFAULT_V)]
        v: String,
    },
    /// Born-rule winner frequencies in the mirror frame.
    Born(EnsembleArgs),
    /// Collapse-duration distribution at the first detector (frame A).
    CollapseTime {
        #[command(flatten)]
        common: EnsembleArgs,
        #[command(flatten)]
        frame: FrameArgs,
        /// Also write the run-0 trajectory to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Frame A versus frame B disagreement rate.
    Disagree {
        #[command(flatten)]
        common: EnsembleArgs,
        #[command(flatten)]
        frame: FrameArgs,
    },
    /// Mirror-frame reading consistency.
    Frame0(EnsembleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub runs: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<f64>,
    /// JSON file with ensemble configuration fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// csv or jsonl
    #[arg(long)]
    pub format: Option<String>,
    /// Print a human-readable table on stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FrameArgs {
    /// Frame speed, m/s or a fraction of c such as 0.99c.
    #[arg(long)]
    pub v: Option<String>,
}

/// Config file contents: every [`EnsembleConfig`] field, all optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub runs: Option<u64>,
    pub master_seed: Option<u64>,
    pub q0: Option<f64>,
    pub d: Option<f64>,
    pub v: Option<f64>,
    pub params: Option<ScenarioOverrides>,
    pub records_format: Option<RecordFormat>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Merges defaults, config file and flags (in rising precedence).
pub fn resolve_config(
    kind: ExperimentKind,
    args: &EnsembleArgs,
    v_flag: Option<&str>,
) -> Result<EnsembleConfig> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(k) = file.experiment {
        if k != kind {
            return Err(Error::Config(format!(
                "config file describes {k}, but the subcommand runs {kind}"
            )));
        }
    }
    let runs = match args.runs {
        Some(r) if r < 1 => return Err(Error::Config(format!("runs must be >= 1, got {r}"))),
        Some(r) => r as u64,
        None => file.runs.unwrap_or(DEFAULT_RUNS),
    };
    let v = if kind.needs_velocity() {
        Some(match v_flag {
            Some(s) => parse_velocity(s)?,
            None => match file.v {
                Some(v) => v,
                None => parse_velocity(DEFAULT_V)?,
            },
        })
    } else {
        file.v
    };
    let records_format = match &args.format {
        Some(f) => f.parse()?,
        None => file.records_format.unwrap_or_default(),
    };
    let config = EnsembleConfig {
        experiment: kind,
        runs,
        master_seed: args.seed.or(file.master_seed).unwrap_or(DEFAULT_SEED),
        q0: args.q0.or(file.q0).unwrap_or(DEFAULT_Q0),
        d: args.d.or(file.d).unwrap_or(DEFAULT_D),
        v,
        params: file.params.unwrap_or_default(),
        records_format,
    };
    config.validate()?;
    Ok(config)
}

/// Parses `argv`, runs, and returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

/// Executes a command, returning its stdout text.
pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Frames { d, v } => cmd_frames(d, parse_velocity(&v)?),
        Command::Transform { t, x, v } => cmd_transform(t, x, parse_velocity(&v)?),
        Command::MinDistance { tau, v } => cmd_min_distance(tau, parse_velocity(&v)?),
        Command::Born(args) => cmd_ensemble(ExperimentKind::BornRule, &args, None, None),
        Command::CollapseTime { common, frame, trace } => cmd_ensemble(
            ExperimentKind::CollapseTime,
            &common,
            frame.v.as_deref(),
            trace.as_deref(),
        ),
        Command::Disagree { common, frame } => {
            cmd_ensemble(ExperimentKind::CrossFrame, &common, frame.v.as_deref(), None)
        }
        Command::Frame0(args) => cmd_ensemble(ExperimentKind::Frame0Consistency, &args, None, None),
    }
}

pub fn cmd_frames(d: f64, v: f64) -> Result<String> {
    if v < 0.0 {
        return Err(Error::InvalidFrame(format!("frame speed must be >= 0, got {v}")));
    }
    let (e1, e2) = relativity::detection_events(d)?;
    let g = relativity::gamma(v)?;
    let gap = if v > 0.0 { relativity::activation_gap(d, v)? } else { 0.0 };
    let mut out = String::new();
    out.push_str(&format!("d        {d:.6e} m\n"));
    out.push_str(&format!("v        {v:.6e} m/s ({:.6} c)\n", v / C));
    out.push_str(&format!("t0       {:.6e} s\n", e1.t));
    out.push_str(&format!("gamma    {g:.6e}\n"));
    out.push_str(&format!("delta_t  {gap:.6e} s\n"));
    out.push_str(&format!(
        "{:<6} {:>14} {:>14} {:>14}\n",
        "frame", "t_event1_s", "t_event2_s", "first"
    ));
    for (label, vel) in [("0", 0.0), ("A", v), ("B", -v)] {
        let t1 = relativity::boost(e1, vel)?.t;
        let t2 = relativity::boost(e2, vel)?.t;
        let first = relativity::first_detector(&Frame::custom(vel)?, d)?;
        out.push_str(&format!("{label:<6} {t1:>14.6e} {t2:>14.6e} {first:>14}\n"));
    }
    Ok(out)
}

pub fn cmd_transform(t: f64, x: f64, v: f64) -> Result<String> {
    let e = relativity::boost(Event::new(t, x)?, v)?;
    Ok(format!(
        "t' = {:.9e} s\nx' = {:.9e} m\ngamma = {:.9e}\n",
        e.t,
        e.x,
        relativity::gamma(v)?
    ))
}

pub fn cmd_min_distance(tau: f64, v: f64) -> Result<String> {
    let d = relativity::min_separation(tau, v)?;
    Ok(format!("{d:.6e} m\n"))
}

fn cmd_ensemble(
    kind: ExperimentKind,
    args: &EnsembleArgs,
    v_flag: Option<&str>,
    trace: Option<&Path>,
) -> Result<String> {
    let config = resolve_config(kind, args, v_flag)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let (stats, records) = run_ensemble_with_workers(&config, workers)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let records_name = format!("records.{}", config.records_format.extension());
    let records_path = args.out_dir.join(&records_name);
    export_records(&records, &records_path, config.records_format)?;
    let manifest_path = args.out_dir.join("manifest.json");
    write_manifest(&Manifest::new(&config, &stats, &records_name)?, &manifest_path)?;

    if let Some(path) = trace {
        write_trace(&config, path)?;
    }
    if args.verbose {
        eprint!("{}", stats_table(&stats));
    }

    let summary = summary_json(&config, &stats, &records_path, &manifest_path)?;
    let mut text = serde_json::to_string(&summary).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn write_trace(config: &EnsembleConfig, path: &Path) -> Result<()> {
    let scenario = config.scenario()?;
    let frame = Frame::a(config.v.unwrap_or_default())?;
    let active = active_profiles(&scenario, &frame)?;
    let pair = ProfilePair::new(&active.profile1, &active.profile2);
    let keys = DetectorKeys::derive(config.master_seed, 0);
    let (_, points) = trace_to_collapse(
        scenario.q0,
        &pair,
        &scenario.params,
        &CounterNoise,
        &keys.bindings(&active.detectors),
    )?;
    write_trajectory_csv(&points, path)
}

fn summary_json(
    config: &EnsembleConfig,
    stats: &EnsembleStats,
    records: &Path,
    manifest: &Path,
) -> Result<Value> {
    let mut m = Map::new();
    m.insert("experiment".into(), json!(config.experiment));
    m.insert("runs".into(), json!(config.runs));
    m.insert("master_seed".into(), json!(config.master_seed));
    m.insert("q0".into(), json!(config.q0));
    m.insert("d".into(), json!(config.d));
    if let Some(v) = config.v {
        m.insert("v".into(), json!(v));
    }
    let headline = match config.experiment {
        ExperimentKind::CrossFrame => "disagree",
        _ => "winner_1",
    };
    if let Some(p) = stats.proportion(headline) {
        let key = if headline == "disagree" { "rate" } else { "frequency" };
        m.insert(key.into(), json!(p.estimate));
        m.insert("wilson_95".into(), json!([p.wilson_lo, p.wilson_hi]));
    }
    match config.experiment {
        ExperimentKind::CrossFrame => {
            m.insert("analytic".into(), json!(stats.analytic_disagreement));
            m.insert("delta_t_s".into(), json!(relativity::activation_gap(config.d, config.v.unwrap_or_default())?));
        }
        ExperimentKind::CollapseTime => {
            m.insert(
                "median_duration_s".into(),
                json!(stats.duration_quantiles_s.map(|q| q.p50)),
            );
            m.insert("delta_t_s".into(), json!(relativity::activation_gap(config.d, config.v.unwrap_or_default())?));
        }
        ExperimentKind::Frame0Consistency => {
            m.insert("contradictions".into(), json!(stats.contradictions));
        }
        ExperimentKind::BornRule => {}
    }
    if stats.budget_violation_fraction.is_some() {
        m.insert(
            "budget_violation_fraction".into(),
            json!(stats.budget_violation_fraction),
        );
    }
    m.insert("records".into(), json!(records.display().to_string()));
    m.insert("manifest".into(), json!(manifest.display().to_string()));
    m.insert("stats".into(), serde_json::to_value(stats).map_err(|e| Error::Config(e.to_string()))?);
    Ok(Value::Object(m))
}

fn stats_table(stats: &EnsembleStats) -> String {
    let mut out = format!("experiment {}  n = {}\n", stats.experiment, stats.n);
    for (class, count) in &stats.counts {
        out.push_str(&format!("  {class:<12} {count:>10}\n"));
    }
    for (name, p) in &stats.proportions {
        out.push_str(&format!(
            "  {name:<12} {:.6}  95% [{:.6}, {:.6}]\n",
            p.estimate, p.wilson_lo, p.wilson_hi
        ));
    }
    if let Some(q) = stats.duration_quantiles_s {
        out.push_str(&format!(
            "  duration p10 {:.6e} s  p50 {:.6e} s  p90 {:.6e} s\n",
            q.p10, q.p50, q.p90
        ));
    }
    if let Some(f) = stats.budget_violation_fraction {
        out.push_str(&format!("  over activation gap {f:.6}\n"));
    }
    if let Some(a) = stats.analytic_disagreement {
        out.push_str(&format!("  analytic disagreement {a:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_table_rows() {
        let t = cmd_frames(1000.0, 0.99 * C).unwrap();
        let row_a = t.lines().find(|l| l.starts_with("A ")).unwrap();
        assert!(row_a.contains("2.364573e-7"), "{row_a}");
        assert!(row_a.trim_end().ends_with("D1"));
        let row_b = t.lines().find(|l| l.starts_with("B ")).unwrap();
        assert!(row_b.trim_end().ends_with("D2"));
        assert!(t.contains("delta_t  4.681855e-5 s"));
    }

    #[test]
    fn frames_at_rest_are_simultaneous() {
        let t = cmd_frames(1000.0, 0.0).unwrap();
        for label in ["0 ", "A ", "B "] {
            let row = t.lines().find(|l| l.starts_with(label)).unwrap();
            assert_eq!(row.matches("3.335641e-6").count(), 2, "{row}");
            assert!(row.trim_end().ends_with("simultaneous"));
        }
    }

    #[test]
    fn frames_rejects_bad_geometry() {
        assert!(cmd_frames(-1.0, 0.5 * C).unwrap_err().is_validation());
        assert!(cmd_frames(10.0, -0.5 * C).unwrap_err().is_validation());
    }

    #[test]
    fn min_distance_output() {
        assert_eq!(cmd_min_distance(1e-4, 0.99 * C).unwrap(), "2.135906e3 m\n");
        assert_eq!(cmd_min_distance(1e-6, 0.99 * C).unwrap(), "2.135906e1 m\n");
    }

    #[test]
    fn config_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"runs": 7, "q0": 0.2, "master_seed": 9}"#).unwrap();
        let args = EnsembleArgs {
            seed: None,
            runs: None,
            q0: Some(0.4),
            d: None,
            config: Some(path.clone()),
            out_dir: dir.path().into(),
            workers: None,
            format: None,
            verbose: false,
        };
        let c = resolve_config(ExperimentKind::BornRule, &args, None).unwrap();
        assert_eq!((c.runs, c.q0, c.master_seed, c.d), (7, 0.4, 9, DEFAULT_D));
        assert_eq!(c.v, None);

        fs::write(&path, r#"{"runs": 7, "seed": 3}"#).unwrap();
        assert!(resolve_config(ExperimentKind::BornRule, &args, None).is_err());
        fs::write(&path, r#"{"experiment": "cross_frame"}"#).unwrap();
        assert!(resolve_config(ExperimentKind::BornRule, &args, None).is_err());
    }
}
