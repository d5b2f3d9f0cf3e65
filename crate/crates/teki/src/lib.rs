//! Experiment driver for ensemble Kalman inversion: configuration files,
//! truth and data synthesis, the method × initialization arms, output files
//! and post-hoc checks of recorded trajectories.

pub mod check;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod parallel;

pub use config::{ExperimentConfig, Init, ModelKind};
pub use error::{Error, Result};
