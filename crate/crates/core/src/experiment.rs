//! Split-beam two-detector experiment.
//!
//! A photon is split toward D1 at `+d` and D2 at `-d`. Each detector has a
//! pointer that occupies a "yes" region or a "no" region, so the two branches
//! differ in the occupation of four pointer cells. Which of those cells (and
//! which noise streams) take part in the collapse depends on the frame:
//! whichever detector fires first decides the outcome alone, and in the
//! mirror frame both fire together.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::collapse::{
    self, check_probability, CellId, Collapse, CollapseParams, Measure, OccupationProfile,
    ProfilePair, StreamBindings, TwoBranchState,
};
pub use crate::collapse::Branch;
use crate::ensemble::derive_stream_key;
use crate::error::{Error, Result};
use crate::noise::{CounterNoise, NoiseSource, StreamKey};
use crate::relativity::{self, FirstDetector, Frame, FrameLabel};

/// Pointer-region occupation of a filled cell.
pub const DEFAULT_POINTER_ETA: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DetectorId {
    D1,
    D2,
}

impl DetectorId {
    /// Noise scope of the detector's cells.
    pub fn scope(self) -> u32 {
        match self {
            DetectorId::D1 => 0,
            DetectorId::D2 => 1,
        }
    }

    /// The detector that reads "yes" when `branch` wins.
    pub fn fired_by(branch: Branch) -> Self {
        match branch {
            Branch::One => DetectorId::D1,
            Branch::Two => DetectorId::D2,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorId::D1 => "D1",
            DetectorId::D2 => "D2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reading {
    Yes,
    No,
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reading::Yes => "yes",
            Reading::No => "no",
        })
    }
}

/// Reading of `detector` when `winner` survives.
pub fn reading(winner: Branch, detector: DetectorId) -> Reading {
    if DetectorId::fired_by(winner) == detector {
        Reading::Yes
    } else {
        Reading::No
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub id: DetectorId,
    /// Signed distance from the mirror, m.
    pub position: f64,
    /// Pointer occupation when reading "yes".
    pub yes_profile: OccupationProfile,
    /// Pointer occupation when reading "no".
    pub no_profile: OccupationProfile,
}

impl DetectorSpec {
    /// One yes-region cell and one no-region cell, each holding `eta` when
    /// the pointer is there.
    pub fn standard(id: DetectorId, d: f64, eta: f64) -> Result<Self> {
        let scope = id.scope();
        let position = match id {
            DetectorId::D1 => d,
            DetectorId::D2 => -d,
        };
        let spec = Self {
            id,
            position,
            yes_profile: OccupationProfile::new(vec![(CellId::new(scope, 0), eta)])?,
            no_profile: OccupationProfile::new(vec![(CellId::new(scope, 1), eta)])?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let overlap = self
            .yes_profile
            .cells()
            .iter()
            .any(|(c, _)| self.no_profile.cells().iter().any(|(o, _)| o == c));
        if overlap {
            return Err(Error::InvalidProfile(format!(
                "{} yes and no pointer regions share cells",
                self.id
            )));
        }
        let scope = self.id.scope();
        let foreign = self
            .yes_profile
            .cells()
            .iter()
            .chain(self.no_profile.cells())
            .any(|(c, _)| c.scope != scope);
        if foreign {
            return Err(Error::InvalidProfile(format!(
                "{} has cells outside its noise scope {scope}",
                self.id
            )));
        }
        let side_ok = match self.id {
            DetectorId::D1 => self.position > 0.0,
            DetectorId::D2 => self.position < 0.0,
        };
        if !side_ok {
            return Err(Error::InvalidGeometry(format!(
                "{} at position {} is on the wrong side of the mirror",
                self.id, self.position
            )));
        }
        Ok(())
    }

    pub fn profile_for(&self, reading: Reading) -> &OccupationProfile {
        match reading {
            Reading::Yes => &self.yes_profile,
            Reading::No => &self.no_profile,
        }
    }
}

/// Optional parameter overrides for [`build_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub lambda: Option<f64>,
    pub dt: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_steps: Option<u64>,
    pub alpha: Option<f64>,
    /// Pointer-region occupation.
    pub eta: Option<f64>,
}

impl ScenarioOverrides {
    pub fn params(&self) -> CollapseParams {
        let base = CollapseParams::default();
        CollapseParams {
            lambda: self.lambda.unwrap_or(base.lambda),
            dt: self.dt.unwrap_or(base.dt),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            max_steps: self.max_steps.unwrap_or(base.max_steps),
            alpha: self.alpha.unwrap_or(base.alpha),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(DEFAULT_POINTER_ETA)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Mirror-to-detector distance, m.
    pub d: f64,
    /// Initial branch-1 weight.
    pub q0: f64,
    pub detectors: [DetectorSpec; 2],
    pub params: CollapseParams,
}

pub fn build_scenario(d: f64, q0: f64, overrides: &ScenarioOverrides) -> Result<Scenario> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "detector distance must be > 0, got {d}"
        )));
    }
    check_probability(q0)?;
    let params = overrides.params();
    params.validate()?;
    let eta = overrides.eta();
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "pointer occupation must be > 0, got {eta}"
        )));
    }
    let scenario = Scenario {
        d,
        q0,
        detectors: [
            DetectorSpec::standard(DetectorId::D1, d, eta)?,
            DetectorSpec::standard(DetectorId::D2, d, eta)?,
        ],
        params,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Like [`build_scenario`], normalizing unnormalized `(|a1|^2, |a2|^2)`.
pub fn build_scenario_from_weights(
    d: f64,
    w1: f64,
    w2: f64,
    overrides: &ScenarioOverrides,
) -> Result<Scenario> {
    let q0 = TwoBranchState::from_weights(w1, w2)?.q();
    build_scenario(d, q0, overrides)
}

impl Scenario {
    pub fn detector(&self, id: DetectorId) -> &DetectorSpec {
        match id {
            DetectorId::D1 => &self.detectors[0],
            DetectorId::D2 => &self.detectors[1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.q0)?;
        self.params.validate()?;
        for (spec, id) in self.detectors.iter().zip([DetectorId::D1, DetectorId::D2]) {
            if spec.id != id {
                return Err(Error::Config(format!("detector slot {id} holds {}", spec.id)));
            }
            spec.validate()?;
            if (spec.position.abs() - self.d).abs() > 1e-9 * self.d {
                return Err(Error::InvalidGeometry(format!(
                    "{} is at |x| = {}, expected {}",
                    spec.id,
                    spec.position.abs(),
                    self.d
                )));
            }
        }
        let mut max_rate: f64 = 0.0;
        for active in [&[DetectorId::D1][..], &[DetectorId::D2], &[DetectorId::D1, DetectorId::D2]] {
            let (p1, p2) = self.branch_profiles(active)?;
            let rate = collapse::effective_rate(&p1, &p2, self.params.lambda)?;
            if rate <= 0.0 {
                return Err(Error::NoCollapsePossible);
            }
            max_rate = max_rate.max(rate);
        }
        self.params.check_rate(max_rate)
    }

    /// Branch profiles restricted to the listed detectors: branch 1 has D1
    /// reading yes and D2 reading no; branch 2 the reverse.
    pub fn branch_profiles(
        &self,
        active: &[DetectorId],
    ) -> Result<(OccupationProfile, OccupationProfile)> {
        let mut p1 = OccupationProfile::empty();
        let mut p2 = OccupationProfile::empty();
        for &id in active {
            let spec = self.detector(id);
            p1 = p1.union(spec.profile_for(reading(Branch::One, id)))?;
            p2 = p2.union(spec.profile_for(reading(Branch::Two, id)))?;
        }
        Ok((p1, p2))
    }

    /// Effective collapse rate seen in `frame`, 1/s.
    pub fn rate(&self, frame: &Frame) -> Result<f64> {
        let a = active_profiles(self, frame)?;
        collapse::effective_rate(&a.profile1, &a.profile2, self.params.lambda)
    }
}

/// Branch profiles and noise-stream owners taking part in the collapse in
/// one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveProfiles {
    pub profile1: OccupationProfile,
    pub profile2: OccupationProfile,
    pub detectors: Vec<DetectorId>,
}

pub fn active_detectors(frame: &Frame) -> Vec<DetectorId> {
    if frame.v() > 0.0 {
        vec![DetectorId::D1]
    } else if frame.v() < 0.0 {
        vec![DetectorId::D2]
    } else {
        vec![DetectorId::D1, DetectorId::D2]
    }
}

pub fn active_profiles(scenario: &Scenario, frame: &Frame) -> Result<ActiveProfiles> {
    let detectors = active_detectors(frame);
    let (profile1, profile2) = scenario.branch_profiles(&detectors)?;
    Ok(ActiveProfiles {
        profile1,
        profile2,
        detectors,
    })
}

/// Noise stream of each detector for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorKeys {
    pub d1: StreamKey,
    pub d2: StreamKey,
}

impl DetectorKeys {
    pub fn derive(master_seed: u64, run_index: u64) -> Self {
        Self {
            d1: derive_stream_key(master_seed, DetectorId::D1, run_index),
            d2: derive_stream_key(master_seed, DetectorId::D2, run_index),
        }
    }

    pub fn key(&self, id: DetectorId) -> StreamKey {
        match id {
            DetectorId::D1 => self.d1,
            DetectorId::D2 => self.d2,
        }
    }

    /// Bindings exposing only the listed detectors' streams.
    pub fn bindings(&self, detectors: &[DetectorId]) -> StreamBindings {
        StreamBindings::scoped(detectors.iter().map(|&id| (id.scope(), self.key(id))))
    }
}

/// Result of one collapse as seen from one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame: FrameLabel,
    pub first: FirstDetector,
    pub winner: Branch,
    /// Collapse time measured from the first activation, s.
    pub duration: f64,
    pub steps: u64,
    pub run_index: u64,
    pub stream_keys: Vec<StreamKey>,
    /// Whether the collapse finished inside the activation gap. `None` when
    /// both detectors fire together.
    pub within_budget: Option<bool>,
}

impl FrameOutcome {
    pub fn reading(&self, detector: DetectorId) -> Reading {
        reading(self.winner, detector)
    }
}

pub fn run_frame(
    scenario: &Scenario,
    frame: &Frame,
    master_seed: u64,
    run_index: u64,
) -> Result<FrameOutcome> {
    let keys = DetectorKeys::derive(master_seed, run_index);
    run_frame_with_keys(scenario, frame, &keys, run_index, &CounterNoise)
}

/// [`run_frame`] with explicit detector streams and noise source. Only the
/// streams of the frame's active detectors are read.
pub fn run_frame_with_keys<N: NoiseSource + ?Sized>(
    scenario: &Scenario,
    frame: &Frame,
    keys: &DetectorKeys,
    run_index: u64,
    noise: &N,
) -> Result<FrameOutcome> {
    collapse_in_frame(scenario, frame, keys, run_index, noise).map(|(_, outcome)| outcome)
}

fn collapse_in_frame<N: NoiseSource + ?Sized>(
    scenario: &Scenario,
    frame: &Frame,
    keys: &DetectorKeys,
    run_index: u64,
    noise: &N,
) -> Result<(Collapse, FrameOutcome)> {
    let active = active_profiles(scenario, frame)?;
    let bindings = keys.bindings(&active.detectors);
    let result = collapse::run_to_collapse(
        scenario.q0,
        &active.profile1,
        &active.profile2,
        &scenario.params,
        noise,
        &bindings,
    )?;
    let first = relativity::first_detector(frame, scenario.d)?;
    let within_budget = if frame.v() == 0.0 {
        None
    } else {
        Some(result.duration < relativity::activation_gap(scenario.d, frame.v().abs())?)
    };
    let outcome = FrameOutcome {
        frame: frame.label(),
        first,
        winner: result.winner,
        duration: result.duration,
        steps: result.steps,
        run_index,
        stream_keys: bindings.keys(),
        within_budget,
    };
    Ok((result, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFrameOutcome {
    pub a: FrameOutcome,
    pub b: FrameOutcome,
    pub agree: bool,
}

/// Runs the same physical run in frame A (+v) and frame B (-v).
pub fn cross_frame_trial(
    scenario: &Scenario,
    v: f64,
    master_seed: u64,
    run_index: u64,
) -> Result<CrossFrameOutcome> {
    let a = run_frame(scenario, &Frame::a(v)?, master_seed, run_index)?;
    let b = run_frame(scenario, &Frame::b(v)?, master_seed, run_index)?;
    let agree = a.winner == b.winner;
    Ok(CrossFrameOutcome { a, b, agree })
}

/// Disagreement probability of two independent Born-rule collapses.
pub fn disagreement_rate_analytic(q0: f64) -> Result<f64> {
    check_probability(q0)?;
    Ok(2.0 * q0 * (1.0 - q0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceOutcome {
    pub first: FrameOutcome,
    /// q after the continuation.
    pub final_q: f64,
    pub reversed: bool,
}

/// Collapses in frame A, then keeps evolving with both detectors active
/// (D2 freshly switched on, D1 on unconsumed step indices) for
/// `horizon_steps`. The winner counts as reversed if q ends on the other
/// side of 1/2.
pub fn persistence_trial(
    scenario: &Scenario,
    v: f64,
    master_seed: u64,
    run_index: u64,
    horizon_steps: u64,
) -> Result<PersistenceOutcome> {
    let keys = DetectorKeys::derive(master_seed, run_index);
    let (result, first) =
        collapse_in_frame(scenario, &Frame::a(v)?, &keys, run_index, &CounterNoise)?;

    let both = [DetectorId::D1, DetectorId::D2];
    let (p1, p2) = scenario.branch_profiles(&both)?;
    let full = ProfilePair::new(&p1, &p2);
    let end = collapse::evolve(
        result.final_state,
        &full,
        &scenario.params,
        &CounterNoise,
        &keys.bindings(&both),
        Measure::Cooked,
        result.steps,
        horizon_steps,
    )?;
    let final_q = end.q();
    let side = if final_q >= 0.5 { Branch::One } else { Branch::Two };
    Ok(PersistenceOutcome {
        reversed: side != first.winner,
        first,
        final_q,
    })
}
