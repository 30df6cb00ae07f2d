//! Two-branch stochastic collapse dynamics.
//!
//! The wave function `a1|1> + a2|2>` is evolved by a diagonal, non-unitary
//! Hamiltonian with one real white-noise source per spatial cell. Because the
//! Hamiltonian is diagonal and the noise real, only the squared magnitudes
//! `w_i = |a_i|^2` matter, and they are tracked as logarithms. Over one step
//! with per-cell increments `dB_n`:
//!
//! ```text
//! log w_i += sum_n ( 2 eta_n^(i) dB_n - 2 lambda (eta_n^(i))^2 dt )
//! ```
//!
//! Under the raw measure `dB_n ~ N(0, lambda dt)`, each `w_i` is a mean-one
//! multiplicative martingale. Under the physical (cooked) measure the increments
//! carry the norm-favouring drift `2 lambda eta_bar_n dt` with
//! `eta_bar_n = q eta_n^(1) + (1 - q) eta_n^(2)`, which makes the normalized
//! weight `q = w1 / (w1 + w2)` a martingale and yields Born-rule absorption.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseSource, StreamKey};

/// Largest admissible `rate * dt` for the Euler–Maruyama step.
pub const MAX_RATE_DT: f64 = 0.05;

/// Spatial cell. `scope` selects the noise substream the cell draws from
/// (one scope per detector); `index` addresses the cell inside that stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub scope: u32,
    pub index: u32,
}

impl CellId {
    pub const fn new(scope: u32, index: u32) -> Self {
        Self { scope, index }
    }
}

/// Particle counts per cell for one branch. Cells not listed hold zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OccupationProfile {
    cells: Vec<(CellId, f64)>,
}

impl OccupationProfile {
    pub fn new(cells: Vec<(CellId, f64)>) -> Result<Self> {
        for (i, &(id, eta)) in cells.iter().enumerate() {
            if !eta.is_finite() || eta < 0.0 {
                return Err(Error::InvalidProfile(format!(
                    "cell {id:?} has occupation {eta}, expected a finite value >= 0"
                )));
            }
            if cells[..i].iter().any(|&(other, _)| other == id) {
                return Err(Error::InvalidProfile(format!("duplicate cell {id:?}")));
            }
        }
        Ok(Self { cells })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn cells(&self) -> &[(CellId, f64)] {
        &self.cells
    }

    pub fn eta(&self, id: CellId) -> f64 {
        self.cells
            .iter()
            .find(|(c, _)| *c == id)
            .map_or(0.0, |&(_, eta)| eta)
    }

    /// Cells belonging to the given noise scope only.
    pub fn restrict(&self, scope: u32) -> Self {
        Self {
            cells: self
                .cells
                .iter()
                .copied()
                .filter(|(c, _)| c.scope == scope)
                .collect(),
        }
    }

    /// Concatenation of two profiles over disjoint cells.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        Self::new(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPair {
    pub id: CellId,
    pub eta1: f64,
    pub eta2: f64,
}

/// The two branch profiles aligned on the union of their cells, sorted by id.
/// Absent cells read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePair {
    cells: Vec<CellPair>,
}

impl ProfilePair {
    pub fn new(profile1: &OccupationProfile, profile2: &OccupationProfile) -> Self {
        let mut ids: Vec<CellId> = profile1
            .cells()
            .iter()
            .chain(profile2.cells())
            .map(|&(id, _)| id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let cells = ids
            .into_iter()
            .map(|id| CellPair {
                id,
                eta1: profile1.eta(id),
                eta2: profile2.eta(id),
            })
            .collect();
        Self { cells }
    }

    pub fn cells(&self) -> &[CellPair] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `sum_n (eta_n^(1) - eta_n^(2))^2`
    pub fn contrast(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| (c.eta1 - c.eta2) * (c.eta1 - c.eta2))
            .sum()
    }

    pub fn rate(&self, lambda: f64) -> f64 {
        lambda * self.contrast()
    }

    /// Applies one raw update given one increment per union cell, in cell order.
    pub fn step(
        &self,
        state: TwoBranchState,
        params: &CollapseParams,
        increments: &[f64],
    ) -> Result<TwoBranchState> {
        if increments.len() != self.cells.len() {
            return Err(Error::IncompleteNoise {
                expected: self.cells.len(),
                got: increments.len(),
            });
        }
        if let Some(bad) = increments.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("noise increment {bad}")));
        }
        Ok(self.step_unchecked(state, params, increments))
    }

    #[inline]
    fn step_unchecked(
        &self,
        state: TwoBranchState,
        params: &CollapseParams,
        increments: &[f64],
    ) -> TwoBranchState {
        let damping = 2.0 * params.lambda * params.dt;
        let (mut d1, mut d2) = (0.0, 0.0);
        for (c, &db) in self.cells.iter().zip(increments) {
            d1 += 2.0 * c.eta1 * db - damping * c.eta1 * c.eta1;
            d2 += 2.0 * c.eta2 * db - damping * c.eta2 * c.eta2;
        }
        TwoBranchState {
            logw1: state.logw1 + d1,
            logw2: state.logw2 + d2,
        }
    }
}

/// Squared branch magnitudes, stored as logarithms. `-inf` encodes an
/// exactly vanished branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBranchState {
    pub logw1: f64,
    pub logw2: f64,
}

impl TwoBranchState {
    pub fn from_q(q0: f64) -> Result<Self> {
        check_probability(q0)?;
        Ok(Self {
            logw1: q0.ln(),
            logw2: (1.0 - q0).ln(),
        })
    }

    /// Builds a state from possibly unnormalized squared amplitudes.
    pub fn from_weights(w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite()) || w1 < 0.0 || w2 < 0.0 || w1 + w2 <= 0.0 {
            return Err(Error::InvalidProbability(format!(
                "branch weights ({w1}, {w2}) must be finite, non-negative and not both zero"
            )));
        }
        Ok(Self {
            logw1: w1.ln(),
            logw2: w2.ln(),
        })
    }

    /// `log(w1 / w2)`
    pub fn log_ratio(&self) -> f64 {
        self.logw1 - self.logw2
    }

    /// Normalized branch-1 weight `w1 / (w1 + w2)`.
    pub fn q(&self) -> f64 {
        logistic(self.log_ratio())
    }

    /// `(q, 1 - q)`
    pub fn normalized(&self) -> (f64, f64) {
        let q = self.q();
        (q, 1.0 - q)
    }

    /// Raw (unnormalized) total weight `w1 + w2`, as a logarithm.
    pub fn log_norm(&self) -> f64 {
        let m = self.logw1.max(self.logw2);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + ((self.logw1 - m).exp() + (self.logw2 - m).exp()).ln()
    }
}

/// Numerically stable `1 / (1 + exp(-x))`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_probability(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(format!(
            "{q} is outside [0, 1]"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseParams {
    /// Collapse frequency, 1/s.
    pub lambda: f64,
    /// Integrator step, s.
    pub dt: f64,
    /// Absorption threshold on q.
    pub epsilon: f64,
    pub max_steps: u64,
    /// Cell edge length, m. Only used to describe profiles.
    pub alpha: f64,
}

impl Default for CollapseParams {
    fn default() -> Self {
        Self {
            lambda: 1e-16,
            dt: 2.5e-7,
            epsilon: 1e-6,
            max_steps: 10_000_000,
            alpha: 1e-7,
        }
    }
}

impl CollapseParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        Ok(())
    }

    /// Rejects steps too coarse for the given effective rate.
    pub fn check_rate(&self, rate: f64) -> Result<()> {
        if rate * self.dt > MAX_RATE_DT {
            return Err(Error::InvalidParams(format!(
                "rate * dt = {:.6e} exceeds {MAX_RATE_DT}; reduce dt below {:.6e} s",
                rate * self.dt,
                MAX_RATE_DT / rate
            )));
        }
        Ok(())
    }
}

/// Which measure the per-cell increments are drawn under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// `dB ~ N(0, lambda dt)`
    Raw,
    /// `dB ~ N(2 lambda eta_bar dt, lambda dt)`, the physical measure.
    Cooked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Branch {
    pub fn number(self) -> u8 {
        match self {
            Branch::One => 1,
            Branch::Two => 2,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Branch::One => Branch::Two,
            Branch::Two => Branch::One,
        }
    }
}

/// Maps each cell scope to the noise stream it draws from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StreamBindings {
    fallback: Option<StreamKey>,
    scoped: Vec<(u32, StreamKey)>,
}

impl StreamBindings {
    /// One stream for every scope.
    pub fn single(key: StreamKey) -> Self {
        Self {
            fallback: Some(key),
            scoped: Vec::new(),
        }
    }

    pub fn scoped(bindings: impl IntoIterator<Item = (u32, StreamKey)>) -> Self {
        Self {
            fallback: None,
            scoped: bindings.into_iter().collect(),
        }
    }

    pub fn key(&self, scope: u32) -> Result<StreamKey> {
        self.scoped
            .iter()
            .find(|(s, _)| *s == scope)
            .map(|&(_, k)| k)
            .or(self.fallback)
            .ok_or(Error::UnboundStream { scope })
    }

    pub fn keys(&self) -> Vec<StreamKey> {
        let mut keys: Vec<_> = self.scoped.iter().map(|&(_, k)| k).collect();
        keys.extend(self.fallback);
        keys
    }
}

/// Per-step noise driver bound to one profile pair.
struct Driver<'a, N: NoiseSource + ?Sized> {
    pair: &'a ProfilePair,
    params: &'a CollapseParams,
    noise: &'a N,
    keys: Vec<StreamKey>,
    sd: f64,
    buf: Vec<f64>,
}

impl<'a, N: NoiseSource + ?Sized> Driver<'a, N> {
    fn new(
        pair: &'a ProfilePair,
        params: &'a CollapseParams,
        noise: &'a N,
        bindings: &StreamBindings,
    ) -> Result<Self> {
        let keys = pair
            .cells()
            .iter()
            .map(|c| bindings.key(c.id.scope))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pair,
            params,
            noise,
            keys,
            sd: (params.lambda * params.dt).sqrt(),
            buf: vec![0.0; pair.len()],
        })
    }

    #[inline]
    fn advance(&mut self, state: TwoBranchState, measure: Measure, step: u64) -> TwoBranchState {
        let q = state.q();
        let drift_scale = 2.0 * self.params.lambda * self.params.dt;
        for ((slot, c), &key) in self.buf.iter_mut().zip(self.pair.cells()).zip(&self.keys) {
            let z = self.noise.standard_normal(key, step, c.id.index);
            let mean = match measure {
                Measure::Raw => 0.0,
                Measure::Cooked => drift_scale * (q * c.eta1 + (1.0 - q) * c.eta2),
            };
            *slot = mean + self.sd * z;
        }
        self.pair.step_unchecked(state, self.params, &self.buf)
    }
}

/// Draws one step's increments for every union cell, in cell order.
#[allow(clippy::too_many_arguments)]
pub fn draw_increments<N: NoiseSource + ?Sized>(
    measure: Measure,
    state: &TwoBranchState,
    pair: &ProfilePair,
    params: &CollapseParams,
    noise: &N,
    bindings: &StreamBindings,
    step: u64,
) -> Result<Vec<f64>> {
    let q = state.q();
    let sd = (params.lambda * params.dt).sqrt();
    pair.cells()
        .iter()
        .map(|c| {
            let key = bindings.key(c.id.scope)?;
            let z = noise.standard_normal(key, step, c.id.index);
            let mean = match measure {
                Measure::Raw => 0.0,
                Measure::Cooked => 2.0 * params.lambda * params.dt * (q * c.eta1 + (1.0 - q) * c.eta2),
            };
            Ok(mean + sd * z)
        })
        .collect()
}

/// `lambda * sum_n (eta_n^(1) - eta_n^(2))^2` over the union of cells.
pub fn effective_rate(
    profile1: &OccupationProfile,
    profile2: &OccupationProfile,
    lambda: f64,
) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")));
    }
    revalidate(profile1)?;
    revalidate(profile2)?;
    Ok(ProfilePair::new(profile1, profile2).rate(lambda))
}

// Profiles may arrive through deserialization, bypassing the constructor.
fn revalidate(profile: &OccupationProfile) -> Result<()> {
    OccupationProfile::new(profile.cells.clone()).map(|_| ())
}

/// One raw update from explicitly supplied per-cell increments, ordered as
/// the sorted union of cell ids.
pub fn step(
    state: TwoBranchState,
    profile1: &OccupationProfile,
    profile2: &OccupationProfile,
    params: &CollapseParams,
    increments: &[f64],
) -> Result<TwoBranchState> {
    params.validate()?;
    revalidate(profile1)?;
    revalidate(profile2)?;
    ProfilePair::new(profile1, profile2).step(state, params, increments)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    pub winner: Branch,
    /// Model time from start to absorption, s.
    pub duration: f64,
    pub steps: u64,
    pub final_state: TwoBranchState,
}

/// Absorption test: `Some(winner)` once q leaves `(epsilon, 1 - epsilon)`.
pub fn absorbed(q: f64, epsilon: f64) -> Option<Branch> {
    if q >= 1.0 - epsilon {
        Some(Branch::One)
    } else if q <= epsilon {
        Some(Branch::Two)
    } else {
        None
    }
}

fn prepare(q0: f64, pair: &ProfilePair, params: &CollapseParams) -> Result<TwoBranchState> {
    params.validate()?;
    let state = TwoBranchState::from_q(q0)?;
    let rate = pair.rate(params.lambda);
    if rate <= 0.0 {
        return Err(Error::NoCollapsePossible);
    }
    params.check_rate(rate)?;
    Ok(state)
}

/// Runs the cooked-measure process from `q0` until absorption.
pub fn run_to_collapse<N: NoiseSource + ?Sized>(
    q0: f64,
    profile1: &OccupationProfile,
    profile2: &OccupationProfile,
    params: &CollapseParams,
    noise: &N,
    bindings: &StreamBindings,
) -> Result<Collapse> {
    revalidate(profile1)?;
    revalidate(profile2)?;
    let pair = ProfilePair::new(profile1, profile2);
    run_pair_to_collapse(q0, &pair, params, noise, bindings)
}

pub fn run_pair_to_collapse<N: NoiseSource + ?Sized>(
    q0: f64,
    pair: &ProfilePair,
    params: &CollapseParams,
    noise: &N,
    bindings: &StreamBindings,
) -> Result<Collapse> {
    let mut state = prepare(q0, pair, params)?;
    if let Some(winner) = absorbed(state.q(), params.epsilon) {
        return Ok(Collapse {
            winner,
            duration: 0.0,
            steps: 0,
            final_state: state,
        });
    }
    let mut driver = Driver::new(pair, params, noise, bindings)?;
    for step in 0..params.max_steps {
        state = driver.advance(state, Measure::Cooked, step);
        if let Some(winner) = absorbed(state.q(), params.epsilon) {
            let steps = step + 1;
            return Ok(Collapse {
                winner,
                duration: steps as f64 * params.dt,
                steps,
                final_state: state,
            });
        }
    }
    Err(Error::NonConvergence {
        steps: params.max_steps,
        q: state.q(),
    })
}

/// Advances `steps` steps with no absorption test, using step indices
/// `first_step..first_step + steps`.
#[allow(clippy::too_many_arguments)]
pub fn evolve<N: NoiseSource + ?Sized>(
    state: TwoBranchState,
    pair: &ProfilePair,
    params: &CollapseParams,
    noise: &N,
    bindings: &StreamBindings,
    measure: Measure,
    first_step: u64,
    steps: u64,
) -> Result<TwoBranchState> {
    params.validate()?;
    let mut driver = Driver::new(pair, params, noise, bindings)?;
    let mut state = state;
    for step in first_step..first_step + steps {
        state = driver.advance(state, measure, step);
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub t_model_s: f64,
    pub q: f64,
    pub logw1: f64,
    pub logw2: f64,
}

/// Same process as [`run_pair_to_collapse`], recording every step.
pub fn trace_to_collapse<N: NoiseSource + ?Sized>(
    q0: f64,
    pair: &ProfilePair,
    params: &CollapseParams,
    noise: &N,
    bindings: &StreamBindings,
) -> Result<(Collapse, Vec<TrajectoryPoint>)> {
    let mut state = prepare(q0, pair, params)?;
    let point = |step: u64, s: &TwoBranchState| TrajectoryPoint {
        step,
        t_model_s: step as f64 * params.dt,
        q: s.q(),
        logw1: s.logw1,
        logw2: s.logw2,
    };
    let mut trace = vec![point(0, &state)];
    if let Some(winner) = absorbed(state.q(), params.epsilon) {
        let c = Collapse {
            winner,
            duration: 0.0,
            steps: 0,
            final_state: state,
        };
        return Ok((c, trace));
    }
    let mut driver = Driver::new(pair, params, noise, bindings)?;
    for step in 0..params.max_steps {
        state = driver.advance(state, Measure::Cooked, step);
        trace.push(point(step + 1, &state));
        if let Some(winner) = absorbed(state.q(), params.epsilon) {
            let c = Collapse {
                winner,
                duration: (step + 1) as f64 * params.dt,
                steps: step + 1,
                final_state: state,
            };
            return Ok((c, trace));
        }
    }
    Err(Error::NonConvergence {
        steps: params.max_steps,
        q: state.q(),
    })
}

/// Replaces the profiles by a single-cell pair with the same effective rate:
/// branch 1 holds `sqrt(sum_n (eta_n^(1) - eta_n^(2))^2)`, branch 2 holds zero.
/// The cell keeps the scope of the lowest union cell.
pub fn aggregate_profiles(
    profile1: &OccupationProfile,
    profile2: &OccupationProfile,
) -> Result<(OccupationProfile, OccupationProfile)> {
    revalidate(profile1)?;
    revalidate(profile2)?;
    let pair = ProfilePair::new(profile1, profile2);
    let scope = pair.cells().first().map_or(0, |c| c.id.scope);
    let cell = CellId::new(scope, 0);
    let eta = pair.contrast().sqrt();
    Ok((
        OccupationProfile::new(vec![(cell, eta)])?,
        OccupationProfile::new(vec![(cell, 0.0)])?,
    ))
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub(crate) fn sort_floats(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
}
