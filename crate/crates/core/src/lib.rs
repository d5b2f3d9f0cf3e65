//! Ensemble Kalman inversion, its Tikhonov-regularized variant, and their
//! continuous-time flows on spectral Gaussian random fields over the unit
//! square.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel
//! evaluation and the command-line driver live in the companion `teki` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod field;
pub mod flow;
pub mod kalman;
pub mod linalg;
pub mod models;
pub mod problem;
pub mod rng;
pub mod theory;
pub mod toy;

pub use error::{Error, Result};
pub use field::{CovarianceSpec, GridField, SpectralField};
pub use flow::{FlowKind, RunConfig, RunRecord};
pub use kalman::{Ensemble, Perturbation};
pub use problem::{ForwardModel, InverseProblem, NoiseSpec, ObsVector};
