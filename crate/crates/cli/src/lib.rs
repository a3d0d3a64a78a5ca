//! Experiment runner for the thermal-memory identification solver: config
//! ingestion, presets, noise injection, artifact persistence, and the
//! invariant-suite driver.

pub mod config;
pub mod noise;
pub mod runner;

pub use config::{Mode, RunConfig};
pub use noise::inject_noise;
pub use runner::{run, Report, RunnerError};
