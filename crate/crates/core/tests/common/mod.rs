//! Independent reference simulations shared by the integration suites.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

/// Brute-force collapse of the single log-ratio `D = log(w1/w2)` driven by
/// an effective rate `rate`: `dD = 2 rate (2q - 1) dt + 2 sqrt(rate dt) z`.
/// Uses its own generator, not the crate's counter noise.
/// Returns `(branch1_won, duration_s)` per run.
pub fn brute_force_collapses(
    rate: f64,
    dt: f64,
    q0: f64,
    epsilon: f64,
    runs: usize,
    seed: u64,
) -> Vec<(bool, f64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let h = rate * dt;
    let sd = 2.0 * h.sqrt();
    (0..runs)
        .map(|_| {
            let mut d = (q0 / (1.0 - q0)).ln();
            let mut steps = 0u64;
            loop {
                let q = 1.0 / (1.0 + (-d).exp());
                if q >= 1.0 - epsilon {
                    return (true, steps as f64 * dt);
                }
                if q <= epsilon {
                    return (false, steps as f64 * dt);
                }
                d += 2.0 * h * (2.0 * q - 1.0) + sd * normal.sample(&mut rng);
                steps += 1;
            }
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
