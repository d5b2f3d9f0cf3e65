//! Experiment configuration: flat `key=value` text with dotted sections.
//!
//! ```text
//! # eikonal, smooth truth
//! case=2
//! method=teki
//! init=random
//! model=eikonal
//! prior.alpha=2
//! snapshot_iters=1,5,11,17,23
//! ```
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use teki_core::field::CovarianceSpec;
use teki_core::flow::{FlowKind, RunConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Random,
    KlBasis,
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::Random => "random",
            Init::KlBasis => "kl-basis",
        })
    }
}

impl FromStr for Init {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Init::Random),
            "kl-basis" => Ok(Init::KlBasis),
            _ => Err(Error::Config(format!("unknown init `{s}` (random, kl-basis)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Eikonal,
    Darcy,
    LinearToy,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Eikonal => "eikonal",
            ModelKind::Darcy => "darcy",
            ModelKind::LinearToy => "linear-toy",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eikonal" => Ok(ModelKind::Eikonal),
            "darcy" => Ok(ModelKind::Darcy),
            "linear-toy" => Ok(ModelKind::LinearToy),
            _ => Err(Error::Config(format!("unknown model `{s}` (eikonal, darcy, linear-toy)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Truth regularity: 1 `(α=2, a=0.5)`, 2 `(α=3.2, a=0.5)`, 3 `(α=2, a=1)`.
    pub case: u8,
    pub method: FlowKind,
    pub init: Init,
    pub model: ModelKind,
    pub seed: u64,
    pub ensemble_size: usize,
    pub iterations: usize,
    pub h0: f64,
    pub delta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub prior_alpha: f64,
    pub prior_tau: f64,
    /// Exponent of the random initial draws; defaults to 0.5 for EKI, 1 for TEKI.
    pub prior_a: Option<f64>,
    pub prior_kmax: usize,
    pub grid_n: usize,
    pub sources: usize,
    pub obs_per_axis: usize,
    pub obs_mollifier: usize,
    pub snapshot_iters: Vec<usize>,
    pub output_dir: PathBuf,
    pub record_trajectory: bool,
    pub stop_at_noise: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: 1,
            method: FlowKind::Teki,
            init: Init::Random,
            model: ModelKind::Eikonal,
            seed: 0,
            ensemble_size: 100,
            iterations: 23,
            h0: 0.02,
            delta: 0.05,
            gamma: 0.01,
            lambda: 1.0,
            prior_alpha: 2.0,
            prior_tau: 15.0,
            prior_a: None,
            prior_kmax: CovarianceSpec::DEFAULT_KMAX,
            grid_n: 100,
            sources: 5,
            obs_per_axis: 8,
            obs_mollifier: 0,
            snapshot_iters: vec![1, 5, 11, 17, 23],
            output_dir: PathBuf::from("out"),
            record_trajectory: false,
            stop_at_noise: false,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| Error::Config(format!("{key}: cannot parse `{v}`: {e}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{v}`"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", idx + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "case" => self.case = value(key, v)?,
            "method" => self.method = v.parse().map_err(|e: teki_core::Error| Error::Config(e.to_string()))?,
            "init" => self.init = v.parse()?,
            "model" => self.model = v.parse()?,
            "seed" => self.seed = value(key, v)?,
            "ensemble_size" => self.ensemble_size = value(key, v)?,
            "iterations" => self.iterations = value(key, v)?,
            "h0" => self.h0 = value(key, v)?,
            "delta" => self.delta = value(key, v)?,
            "gamma" => self.gamma = value(key, v)?,
            "lambda" => self.lambda = value(key, v)?,
            "prior.alpha" => self.prior_alpha = value(key, v)?,
            "prior.tau" => self.prior_tau = value(key, v)?,
            "prior.a" => self.prior_a = Some(value(key, v)?),
            "prior.kmax" => self.prior_kmax = value(key, v)?,
            "grid.n" => self.grid_n = value(key, v)?,
            "sources" => self.sources = value(key, v)?,
            "obs.per_axis" => self.obs_per_axis = value(key, v)?,
            "obs.mollifier" => self.obs_mollifier = value(key, v)?,
            "snapshot_iters" => {
                self.snapshot_iters = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|s| value(key, s.trim())).collect::<Result<_>>()?
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "record_trajectory" => self.record_trajectory = flag(key, v)?,
            "stop_at_noise" => self.stop_at_noise = flag(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(1..=3).contains(&self.case) {
            return fail("case must be 1, 2 or 3");
        }
        if self.ensemble_size < 2 {
            return fail("ensemble_size must be at least 2");
        }
        if !(self.h0 > 0.0 && self.delta > 0.0 && self.gamma > 0.0 && self.lambda > 0.0) {
            return fail("h0, delta, gamma and lambda must be positive");
        }
        if self.model != ModelKind::LinearToy && self.grid_n < 4 {
            return fail("grid.n must be at least 4");
        }
        if self.model == ModelKind::Eikonal && self.sources == 0 {
            return fail("eikonal runs need at least one source");
        }
        if self.obs_per_axis == 0 {
            return fail("obs.per_axis must be positive");
        }
        if self.init == Init::KlBasis && self.ensemble_size > (self.prior_kmax + 1).pow(2) {
            return fail("kl-basis ensemble larger than the number of modes");
        }
        self.prior_spec()?;
        Ok(())
    }

    pub fn prior_spec(&self) -> Result<CovarianceSpec> {
        Ok(CovarianceSpec::new(self.prior_alpha, self.prior_tau, self.prior_kmax)?)
    }

    /// `(α, a)` of the truth draw.
    pub fn truth_params(&self) -> (f64, f64) {
        match self.case {
            2 => (3.2, 0.5),
            3 => (2.0, 1.0),
            _ => (2.0, 0.5),
        }
    }

    pub fn init_exponent(&self) -> f64 {
        self.prior_a.unwrap_or(match self.method {
            FlowKind::Eki => 0.5,
            FlowKind::Teki => 1.0,
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            iterations: self.iterations,
            h0: self.h0,
            delta: self.delta,
            snapshot_iters: self.snapshot_iters.clone(),
            stop_at_noise_level: self.stop_at_noise,
            keep_trajectory: self.record_trajectory,
        }
    }

    /// Every key with its resolved value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let snaps: Vec<String> = self.snapshot_iters.iter().map(|s| s.to_string()).collect();
        vec![
            ("case", self.case.to_string()),
            ("method", self.method.to_string()),
            ("init", self.init.to_string()),
            ("model", self.model.to_string()),
            ("seed", self.seed.to_string()),
            ("ensemble_size", self.ensemble_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("h0", self.h0.to_string()),
            ("delta", self.delta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("lambda", self.lambda.to_string()),
            ("prior.alpha", self.prior_alpha.to_string()),
            ("prior.tau", self.prior_tau.to_string()),
            ("prior.a", self.init_exponent().to_string()),
            ("prior.kmax", self.prior_kmax.to_string()),
            ("grid.n", self.grid_n.to_string()),
            ("sources", self.sources.to_string()),
            ("obs.per_axis", self.obs_per_axis.to_string()),
            ("obs.mollifier", self.obs_mollifier.to_string()),
            ("snapshot_iters", snaps.join(",")),
            ("output_dir", self.output_dir.display().to_string()),
            ("record_trajectory", self.record_trajectory.to_string()),
            ("stop_at_noise", self.stop_at_noise.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}
