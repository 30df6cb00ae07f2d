//! 1+1 dimensional kinematics for the split-beam experiment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light, m/s (exact SI value).
pub const C: f64 = 299_792_458.0;

/// Boosted times closer than this are reported as simultaneous.
pub const SIMULTANEITY_TOLERANCE_S: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// s
    pub t: f64,
    /// m
    pub x: f64,
}

impl Event {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        if !(t.is_finite() && x.is_finite()) {
            return Err(Error::InvalidGeometry(format!("event ({t}, {x}) is not finite")));
        }
        Ok(Self { t, x })
    }

    /// `c^2 t^2 - x^2`, m^2.
    pub fn interval(&self) -> f64 {
        (C * self.t).powi(2) - self.x.powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameLabel {
    #[serde(rename = "0")]
    Frame0,
    A,
    B,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameLabel::Frame0 => "0",
            FrameLabel::A => "A",
            FrameLabel::B => "B",
            FrameLabel::Custom => "custom",
        })
    }
}

/// Inertial frame moving along x with signed velocity `v` relative to the mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    v: f64,
    label: FrameLabel,
}

impl Frame {
    /// Mirror rest frame.
    pub fn rest() -> Self {
        Self { v: 0.0, label: FrameLabel::Frame0 }
    }

    /// Frame moving in +x at speed `speed`.
    pub fn a(speed: f64) -> Result<Self> {
        Self::new(speed, FrameLabel::A)
    }

    /// Frame moving in -x at speed `speed`.
    pub fn b(speed: f64) -> Result<Self> {
        Self::new(-speed, FrameLabel::B)
    }

    pub fn custom(v: f64) -> Result<Self> {
        Self::new(v, FrameLabel::Custom)
    }

    pub fn new(v: f64, label: FrameLabel) -> Result<Self> {
        check_speed(v)?;
        let consistent = match label {
            FrameLabel::Frame0 => v == 0.0,
            FrameLabel::A => v > 0.0,
            FrameLabel::B => v < 0.0,
            FrameLabel::Custom => true,
        };
        if !consistent {
            return Err(Error::InvalidFrame(format!(
                "frame {label} cannot have velocity {v} m/s"
            )));
        }
        Ok(Self { v, label })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn label(&self) -> FrameLabel {
        self.label
    }
}

fn check_speed(v: f64) -> Result<()> {
    if !v.is_finite() || v.abs() >= C {
        return Err(Error::Superluminal { v });
    }
    Ok(())
}

/// Lorentz factor `1 / sqrt(1 - v^2/c^2)`.
pub fn gamma(v: f64) -> Result<f64> {
    check_speed(v)?;
    let beta = v / C;
    Ok(1.0 / ((1.0 - beta) * (1.0 + beta)).sqrt())
}

/// Coordinates of `e` in a frame moving with velocity `v`.
pub fn boost(e: Event, v: f64) -> Result<Event> {
    let g = gamma(v)?;
    Ok(Event {
        t: g * (e.t - v * e.x / (C * C)),
        x: g * (e.x - v * e.t),
    })
}

/// Arrival of the two beam halves at D1 (+d) and D2 (-d) in the mirror frame.
pub fn detection_events(d: f64) -> Result<(Event, Event)> {
    check_distance(d)?;
    let t0 = d / C;
    Ok((Event { t: t0, x: d }, Event { t: t0, x: -d }))
}

fn check_distance(d: f64) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "detector distance must be > 0, got {d}"
        )));
    }
    Ok(())
}

/// Time between the two detector activations in a frame moving at `v`:
/// `2 gamma v d / c^2`.
pub fn activation_gap(d: f64, v: f64) -> Result<f64> {
    check_distance(d)?;
    if !(v > 0.0) {
        return Err(Error::InvalidFrame(format!("activation gap needs v > 0, got {v}")));
    }
    Ok(2.0 * gamma(v)? * v * d / (C * C))
}

/// Detector distance at which the activation gap equals `tau`.
pub fn min_separation(tau: f64, v: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidGeometry(format!("collapse time must be > 0, got {tau}")));
    }
    if !(v > 0.0) {
        return Err(Error::InvalidFrame(format!("minimum separation needs v > 0, got {v}")));
    }
    Ok(tau * C * C / (2.0 * gamma(v)? * v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstDetector {
    D1,
    D2,
    #[serde(rename = "simultaneous")]
    Simultaneous,
}

impl fmt::Display for FirstDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FirstDetector::D1 => "D1",
            FirstDetector::D2 => "D2",
            FirstDetector::Simultaneous => "simultaneous",
        })
    }
}

/// Which detector fires first as seen from `frame`.
pub fn first_detector(frame: &Frame, d: f64) -> Result<FirstDetector> {
    let (e1, e2) = detection_events(d)?;
    let t1 = boost(e1, frame.v())?.t;
    let t2 = boost(e2, frame.v())?.t;
    Ok(if (t1 - t2).abs() <= SIMULTANEITY_TOLERANCE_S {
        FirstDetector::Simultaneous
    } else if t1 < t2 {
        FirstDetector::D1
    } else {
        FirstDetector::D2
    })
}

/// Parses `"0.99c"` as a fraction of c, otherwise plain m/s.
pub fn parse_velocity(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.strip_suffix('c') {
        Some(frac) => frac.trim().parse::<f64>().map(|f| f * C),
        None => s.parse::<f64>(),
    }
    .map_err(|_| Error::Config(format!("cannot parse velocity {s:?}")))?;
    check_speed(v)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(0.0).unwrap(), 1.0);
        assert!(rel(gamma(0.6 * C).unwrap(), 1.25) < 1e-14);
        // 1 / sqrt(1 - 0.9801)
        assert!(rel(gamma(0.99 * C).unwrap(), 7.088_812_050_083_354) < 1e-13);
        assert!(matches!(gamma(C), Err(Error::Superluminal { .. })));
        assert!(gamma(-1.5 * C).is_err());
    }

    #[test]
    fn boost_origin_is_fixed() {
        let e = boost(Event { t: 0.0, x: 0.0 }, 0.7 * C).unwrap();
        assert_eq!((e.t, e.x), (0.0, 0.0));
    }

    #[test]
    fn boost_detection_event() {
        let (e1, _) = detection_events(1000.0).unwrap();
        let a = boost(e1, 0.99 * C).unwrap();
        assert!(rel(a.t, 2.3646e-7) < 5e-5);
        assert!(rel(a.x, 70.888) < 5e-5);
        assert!((C * a.t - a.x).abs() < 1e-6);
        let b = boost(e1, -0.99 * C).unwrap();
        assert!(rel(b.t, 4.7055e-5) < 5e-5);
    }

    #[test]
    fn detection_event_coordinates() {
        let (e1, e2) = detection_events(1000.0).unwrap();
        assert!(rel(e1.t, 3.33564e-6) < 2e-6);
        assert_eq!(e1.x, 1000.0);
        assert_eq!(e2.x, -1000.0);
        assert_eq!(e1.t, e2.t);
        let (u, _) = detection_events(C).unwrap();
        assert_eq!(u.t, 1.0);
        assert!(detection_events(0.0).is_err());
        assert!(detection_events(-5.0).is_err());
    }

    #[test]
    fn activation_gap_values() {
        let dt = activation_gap(1000.0, 0.99 * C).unwrap();
        assert!(rel(dt, 4.6819e-5) < 2e-5);
        let (e1, e2) = detection_events(1000.0).unwrap();
        let gap = boost(e2, 0.99 * C).unwrap().t - boost(e1, 0.99 * C).unwrap().t;
        assert!(rel(dt, gap) < 1e-12);
        assert!(activation_gap(1000.0, 1e-3).unwrap() < 3e-17);
        let doubled = activation_gap(2000.0, 0.99 * C).unwrap();
        assert!(rel(doubled, 2.0 * dt) < 1e-15);
    }

    #[test]
    fn min_separation_values() {
        // tau c / (2 gamma beta) evaluated independently
        let expected = 1e-4 * C / (2.0 * 7.088_812_050_083_354 * 0.99);
        let d = min_separation(1e-4, 0.99 * C).unwrap();
        assert!(rel(d, expected) < 1e-13);
        assert!(rel(d, 2135.9056) < 1e-7);
        assert!(rel(min_separation(1e-6, 0.99 * C).unwrap(), 21.359056) < 1e-7);
        assert!(rel(activation_gap(d, 0.99 * C).unwrap(), 1e-4) < 1e-12);
        assert!(min_separation(0.0, 0.99 * C).is_err());
        assert!(min_separation(1e-4, C).is_err());
    }

    #[test]
    fn first_detector_by_frame() {
        let d = 1000.0;
        assert_eq!(first_detector(&Frame::a(0.99 * C).unwrap(), d).unwrap(), FirstDetector::D1);
        assert_eq!(first_detector(&Frame::b(0.99 * C).unwrap(), d).unwrap(), FirstDetector::D2);
        assert_eq!(first_detector(&Frame::rest(), d).unwrap(), FirstDetector::Simultaneous);
    }

    #[test]
    fn frame_label_consistency() {
        assert!(Frame::new(-1.0, FrameLabel::A).is_err());
        assert!(Frame::new(1.0, FrameLabel::Frame0).is_err());
        assert!(Frame::a(0.0).is_err());
        assert!(Frame::a(C).is_err());
        assert_eq!(Frame::b(10.0).unwrap().v(), -10.0);
    }

    #[test]
    fn velocity_parsing() {
        assert_eq!(parse_velocity("0.5c").unwrap(), 0.5 * C);
        assert_eq!(parse_velocity("1000").unwrap(), 1000.0);
        assert!(parse_velocity("1c").is_err());
        assert!(parse_velocity("fast").is_err());
    }
}
