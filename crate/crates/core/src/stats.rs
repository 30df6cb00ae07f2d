//! Binomial intervals and distribution comparison.

use serde::{Deserialize, Serialize};

use crate::collapse::sort_floats;
use crate::error::{Error, Result};

/// z for a two-sided 95% interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 || successes > n {
        return Err(Error::InvalidProbability(format!(
            "wilson interval needs 0 <= successes <= n and n >= 1, got {successes}/{n}"
        )));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidProbability(format!("z must be > 0, got {z}")));
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if successes == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((lo, hi))
}

/// Point estimate with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub n: u64,
    pub estimate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl Proportion {
    pub fn new(successes: u64, n: u64) -> Result<Self> {
        let (wilson_lo, wilson_hi) = wilson_interval(successes, n, Z_95)?;
        Ok(Self {
            successes,
            n,
            estimate: successes as f64 / n as f64,
            wilson_lo,
            wilson_hi,
        })
    }

    /// Binomial standard error at the point estimate.
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction). Tied values are stepped over together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidProbability("KS test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in KS sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    sort_floats(&mut a);
    sort_floats(&mut b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    Ok(KsResult { statistic: d, p_value })
}

/// Kolmogorov survival function `2 sum_k (-1)^(k-1) exp(-2 k^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * x * x).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
