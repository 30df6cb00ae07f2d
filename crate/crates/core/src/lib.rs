//! Simulation of a two-branch stochastic collapse model observed from
//! relativistically moving frames.
//!
//! - [`collapse`]: log-space two-branch collapse dynamics with per-cell noise.
//! - [`relativity`]: events, boosts and detector activation order.
//! - [`experiment`]: the split-beam two-detector setup and per-frame runs.
//! - [`ensemble`]: reproducible Monte Carlo ensembles and their statistics.
//! - [`export`]: record, manifest and trajectory files.

pub mod cli;
pub mod collapse;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod export;
pub mod noise;
pub mod relativity;
pub mod stats;

pub use error::{Error, Result};
