//! Counter-addressed Gaussian noise.
//!
//! Every increment is a pure function of `(master key, stream key, step, cell)`,
//! so trajectories can run in any order or on any thread and still consume
//! exactly the same numbers. There is no sequential generator state to share.
//!
//! The mapping is:
//!
//! ```text
//! base = mix64(mix64(stream ^ mix64(step + STEP_SALT)) ^ (cell + CELL_SALT))
//! u1   = ((mix64(base)              >> 11) + 1) * 2^-53      in (0, 1]
//! u2   =  (mix64(base ^ PAIR_SALT)  >> 11)      * 2^-53      in [0, 1)
//! z    = sqrt(-2 ln u1) * cos(2 pi u2)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer (a bijection on `u64`).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

const STEP_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const CELL_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const PAIR_SALT: u64 = 0x8CB9_2BA7_2F3D_8DD7;
const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one independent substream, typically one detector in one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamKey(pub u64);

/// Supplier of standard normal variates addressed by stream, step and cell.
pub trait NoiseSource: Sync {
    fn standard_normal(&self, stream: StreamKey, step: u64, cell: u32) -> f64;
}

/// Hash-based counter noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct CounterNoise;

impl CounterNoise {
    #[inline]
    fn base(stream: StreamKey, step: u64, cell: u32) -> u64 {
        let s = mix64(stream.0 ^ mix64(step.wrapping_add(STEP_SALT)));
        mix64(s ^ (cell as u64).wrapping_add(CELL_SALT))
    }

    /// Uniform pair backing one normal draw.
    pub fn uniforms(stream: StreamKey, step: u64, cell: u32) -> (f64, f64) {
        let base = Self::base(stream, step, cell);
        let u1 = ((mix64(base) >> 11) + 1) as f64 * UNIT;
        let u2 = (mix64(base ^ PAIR_SALT) >> 11) as f64 * UNIT;
        (u1, u2)
    }
}

impl NoiseSource for CounterNoise {
    #[inline]
    fn standard_normal(&self, stream: StreamKey, step: u64, cell: u32) -> f64 {
        let (u1, u2) = Self::uniforms(stream, step, cell);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}
