//! Reproducible Monte Carlo ensembles.
//!
//! Every run draws its noise from streams derived from `(master_seed,
//! detector, run_index)`, so results do not depend on how runs are scheduled
//! across threads. Per-run results are collected in run order and reduced
//! serially.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collapse::{quantile_sorted, sort_floats, Branch};
use crate::error::{Error, Result};
use crate::experiment::{
    self, build_scenario, DetectorId, FrameOutcome, Reading, Scenario, ScenarioOverrides,
};
use crate::noise::{mix64, StreamKey};
use crate::relativity::{self, FirstDetector, Frame, FrameLabel};
use crate::stats::Proportion;

/// Runs may fail (step budget exhausted) on at most this fraction before the
/// ensemble is aborted.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Stream key of one detector in one run.
///
/// ```text
/// packed = (run_index << 1) | detector_bit        (D1 = 0, D2 = 1)
/// key    = mix64(packed ^ mix64(master_seed))
/// ```
///
/// `mix64` (the SplitMix64 finalizer) and xor with a constant are both
/// bijections, so for a fixed seed distinct `(detector, run_index)` pairs with
/// `run_index < 2^63` never collide, and changing the seed changes every key.
pub fn derive_stream_key(master_seed: u64, detector: DetectorId, run_index: u64) -> StreamKey {
    let bit = match detector {
        DetectorId::D1 => 0,
        DetectorId::D2 => 1,
    };
    let packed = (run_index << 1) | bit;
    StreamKey(mix64(packed ^ mix64(master_seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Mirror-frame collapse; winner frequencies.
    BornRule,
    /// First-detector collapse in frame A; duration distribution.
    CollapseTime,
    /// Frames A and B on the same run; agreement.
    CrossFrame,
    /// Mirror-frame collapse; reading consistency and Born marginals.
    Frame0Consistency,
}

impl ExperimentKind {
    pub fn needs_velocity(self) -> bool {
        matches!(self, ExperimentKind::CollapseTime | ExperimentKind::CrossFrame)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::BornRule => "born_rule",
            ExperimentKind::CollapseTime => "collapse_time",
            ExperimentKind::CrossFrame => "cross_frame",
            ExperimentKind::Frame0Consistency => "frame0_consistency",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    #[default]
    Csv,
    Jsonl,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Csv => "csv",
            RecordFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" => Ok(RecordFormat::Jsonl),
            other => Err(Error::Config(format!("unknown record format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub experiment: ExperimentKind,
    pub runs: u64,
    pub master_seed: u64,
    pub q0: f64,
    /// Detector distance, m.
    pub d: f64,
    /// Frame speed, m/s. Only for experiments that use moving frames.
    pub v: Option<f64>,
    #[serde(default)]
    pub params: ScenarioOverrides,
    #[serde(default)]
    pub records_format: RecordFormat,
}

impl EnsembleConfig {
    pub fn new(experiment: ExperimentKind, runs: u64, master_seed: u64, q0: f64) -> Self {
        Self {
            experiment,
            runs,
            master_seed,
            q0,
            d: 1000.0,
            v: experiment.needs_velocity().then_some(0.99 * relativity::C),
            params: ScenarioOverrides::default(),
            records_format: RecordFormat::Csv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        match (self.experiment.needs_velocity(), self.v) {
            (true, None) => {
                return Err(Error::Config(format!("{} requires v", self.experiment)));
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!("{} does not take v", self.experiment)));
            }
            (true, Some(v)) => {
                Frame::a(v)?;
            }
            (false, None) => {}
        }
        self.scenario().map(|_| ())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        build_scenario(self.d, self.q0, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordWinner {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "failed")]
    Failed,
}

impl From<Branch> for RecordWinner {
    fn from(b: Branch) -> Self {
        match b {
            Branch::One => RecordWinner::One,
            Branch::Two => RecordWinner::Two,
        }
    }
}

impl fmt::Display for RecordWinner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordWinner::One => "1",
            RecordWinner::Two => "2",
            RecordWinner::Failed => "failed",
        })
    }
}

/// One exported row: one frame of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: u64,
    pub frame: FrameLabel,
    pub first_detector: FirstDetector,
    pub winner: RecordWinner,
    #[serde(rename = "reading_D1")]
    pub reading_d1: Option<Reading>,
    #[serde(rename = "reading_D2")]
    pub reading_d2: Option<Reading>,
    pub duration_s: Option<f64>,
    pub within_budget: Option<bool>,
}

impl RunRecord {
    fn from_outcome(o: &FrameOutcome) -> Self {
        Self {
            run_index: o.run_index,
            frame: o.frame,
            first_detector: o.first,
            winner: o.winner.into(),
            reading_d1: Some(o.reading(DetectorId::D1)),
            reading_d2: Some(o.reading(DetectorId::D2)),
            duration_s: Some(o.duration),
            within_budget: o.within_budget,
        }
    }

    fn failed(run_index: u64, frame: &Frame, d: f64) -> Self {
        Self {
            run_index,
            frame: frame.label(),
            first_detector: relativity::first_detector(frame, d)
                .unwrap_or(FirstDetector::Simultaneous),
            winner: RecordWinner::Failed,
            reading_d1: None,
            reading_d2: None,
            duration_s: None,
            within_budget: None,
        }
    }

    /// Both detectors report the same reading.
    pub fn is_contradictory(&self) -> bool {
        matches!((self.reading_d1, self.reading_d2), (Some(a), Some(b)) if a == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        sort_floats(&mut v);
        Some(Self {
            p10: quantile_sorted(&v, 0.1)?,
            p50: quantile_sorted(&v, 0.5)?,
            p90: quantile_sorted(&v, 0.9)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub experiment: ExperimentKind,
    pub n: u64,
    /// Runs per outcome class; sums to `n`.
    pub counts: BTreeMap<String, u64>,
    /// Frequencies over non-failed runs, with 95% Wilson intervals.
    pub proportions: BTreeMap<String, Proportion>,
    pub duration_quantiles_s: Option<Quantiles>,
    /// Fraction of moving-frame collapses that overran the activation gap.
    pub budget_violation_fraction: Option<f64>,
    /// Runs whose two detectors gave the same reading.
    pub contradictions: u64,
    pub analytic_disagreement: Option<f64>,
}

impl EnsembleStats {
    pub fn proportion(&self, key: &str) -> Option<&Proportion> {
        self.proportions.get(key)
    }
}

/// Result of one trial before reduction.
#[derive(Debug, Clone)]
enum Trial {
    Single(FrameOutcome),
    Pair(FrameOutcome, FrameOutcome),
    Failed(String),
}

fn run_trial(config: &EnsembleConfig, scenario: &Scenario, run_index: u64) -> Trial {
    let seed = config.master_seed;
    let result = match config.experiment {
        ExperimentKind::BornRule | ExperimentKind::Frame0Consistency => {
            experiment::run_frame(scenario, &Frame::rest(), seed, run_index).map(Trial::Single)
        }
        ExperimentKind::CollapseTime => Frame::a(config.v.unwrap_or_default())
            .and_then(|f| experiment::run_frame(scenario, &f, seed, run_index))
            .map(Trial::Single),
        ExperimentKind::CrossFrame => {
            experiment::cross_frame_trial(scenario, config.v.unwrap_or_default(), seed, run_index)
                .map(|x| Trial::Pair(x.a, x.b))
        }
    };
    result.unwrap_or_else(|e| Trial::Failed(e.to_string()))
}

/// Runs the ensemble on the current rayon pool.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<(EnsembleStats, Vec<RunRecord>)> {
    config.validate()?;
    let scenario = config.scenario()?;
    let trials: Vec<Trial> = (0..config.runs)
        .into_par_iter()
        .map(|i| run_trial(config, &scenario, i))
        .collect();
    reduce(config, &scenario, &trials)
}

/// Runs the ensemble on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(
    config: &EnsembleConfig,
    workers: usize,
) -> Result<(EnsembleStats, Vec<RunRecord>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_ensemble(config))
}

fn reduce(
    config: &EnsembleConfig,
    scenario: &Scenario,
    trials: &[Trial],
) -> Result<(EnsembleStats, Vec<RunRecord>)> {
    let kind = config.experiment;
    let n = trials.len() as u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut records = Vec::with_capacity(trials.len() * 2);
    let mut durations = Vec::new();
    let (mut budget_checked, mut budget_violated) = (0u64, 0u64);
    let mut winners_a = [0u64; 2];
    let mut winners_b = [0u64; 2];
    let mut first_failure: Option<String> = None;

    let classes: &[&str] = match kind {
        ExperimentKind::CrossFrame => &["agree", "disagree", "failed"],
        _ => &["winner_1", "winner_2", "failed"],
    };
    for c in classes {
        counts.insert((*c).to_string(), 0);
    }

    for (run_index, trial) in trials.iter().enumerate() {
        let run_index = run_index as u64;
        let mut note = |o: &FrameOutcome, records: &mut Vec<RunRecord>| {
            durations.push(o.duration);
            if let Some(ok) = o.within_budget {
                budget_checked += 1;
                budget_violated += u64::from(!ok);
            }
            records.push(RunRecord::from_outcome(o));
        };
        match trial {
            Trial::Single(o) => {
                note(o, &mut records);
                let class = match o.winner {
                    Branch::One => "winner_1",
                    Branch::Two => "winner_2",
                };
                *counts.get_mut(class).unwrap() += 1;
            }
            Trial::Pair(a, b) => {
                note(a, &mut records);
                note(b, &mut records);
                winners_a[(a.winner.number() - 1) as usize] += 1;
                winners_b[(b.winner.number() - 1) as usize] += 1;
                let class = if a.winner == b.winner { "agree" } else { "disagree" };
                *counts.get_mut(class).unwrap() += 1;
            }
            Trial::Failed(msg) => {
                first_failure.get_or_insert_with(|| msg.clone());
                *counts.get_mut("failed").unwrap() += 1;
                let frames = match kind {
                    ExperimentKind::CrossFrame => {
                        let v = config.v.unwrap_or_default();
                        vec![Frame::a(v)?, Frame::b(v)?]
                    }
                    ExperimentKind::CollapseTime => vec![Frame::a(config.v.unwrap_or_default())?],
                    _ => vec![Frame::rest()],
                };
                for f in &frames {
                    records.push(RunRecord::failed(run_index, f, scenario.d));
                }
            }
        }
    }

    let failed = counts["failed"];
    if failed as f64 > MAX_FAILURE_FRACTION * n as f64 {
        return Err(Error::TooManyFailures { failed, runs: n });
    }
    if let Some(msg) = first_failure {
        log_failure(failed, &msg);
    }

    let ok = n - failed;
    let mut proportions = BTreeMap::new();
    if ok > 0 {
        match kind {
            ExperimentKind::CrossFrame => {
                proportions.insert("disagree".into(), Proportion::new(counts["disagree"], ok)?);
                proportions.insert("A.winner_1".into(), Proportion::new(winners_a[0], ok)?);
                proportions.insert("B.winner_1".into(), Proportion::new(winners_b[0], ok)?);
            }
            _ => {
                proportions.insert("winner_1".into(), Proportion::new(counts["winner_1"], ok)?);
            }
        }
    }

    let contradictions = records.iter().filter(|r| r.is_contradictory()).count() as u64;
    let stats = EnsembleStats {
        experiment: kind,
        n,
        counts,
        proportions,
        duration_quantiles_s: Quantiles::of(&durations),
        budget_violation_fraction: (budget_checked > 0)
            .then(|| budget_violated as f64 / budget_checked as f64),
        contradictions,
        analytic_disagreement: match kind {
            ExperimentKind::CrossFrame => Some(experiment::disagreement_rate_analytic(config.q0)?),
            _ => None,
        },
    };
    Ok((stats, records))
}

fn log_failure(failed: u64, msg: &str) {
    eprintln!("warning: {failed} run(s) failed; first failure: {msg}");
}
