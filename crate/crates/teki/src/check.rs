//! Replays a recorded run from its manifest and evaluates the invariance,
//! collapse and (for linear models) convergence checks on its trajectory.

use std::fmt;
use std::path::Path;

use teki_core::flow::{covariance_norm, FlowKind, TrajectoryPoint};
use teki_core::kalman::subspace_residual;
use teki_core::theory::{
    affine_drift, apriori_bound_check, collapse_bound_check, convergence_bound_check, kkt_orthogonality,
    kkt_solutions, lambda_bounds, map_identity_check, riccati_check, CheckReport, SpanBasis,
};
use teki_core::Ensemble;

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{Error, Result};
use crate::experiment::build_setup;
use crate::io::{load_trajectory, Manifest};

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Finding {
    fn threshold(name: &str, value: f64, limit: f64) -> Self {
        Finding { name: name.into(), value, limit, passed: value.is_finite() && value <= limit }
    }

    fn ratio(r: &CheckReport, limit: f64) -> Self {
        Finding { name: r.name.clone(), value: r.worst_ratio, limit, passed: r.passed }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} value={:.16e} limit={:.16e} {}",
            self.name,
            self.value,
            self.limit,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Rebuilds the configuration recorded under `config.*` keys.
pub fn config_from_manifest(m: &Manifest) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = false;
    for (k, v) in m.entries() {
        if let Some(key) = k.strip_prefix("config.") {
            cfg.set(key, v)?;
            seen = true;
        }
    }
    if !seen {
        return Err(Error::Config("manifest has no config.* entries".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every applicable check on `<dir>/trajectory.csv`.
pub fn check_dir(dir: &Path) -> Result<Vec<Finding>> {
    let manifest = Manifest::load(&dir.join("manifest.txt"))?;
    let cfg = config_from_manifest(&manifest)?;
    if !cfg.record_trajectory {
        return Err(Error::Config("run was made without record_trajectory=true".into()));
    }
    let traj = load_trajectory(&dir.join("trajectory.csv"), cfg.prior_spec()?)?;
    check_trajectory(&cfg, &traj)
}

pub fn check_trajectory(cfg: &ExperimentConfig, traj: &[TrajectoryPoint]) -> Result<Vec<Finding>> {
    let first = traj.first().ok_or(Error::Config("empty trajectory".into()))?;
    let setup = build_setup(cfg)?;
    let p = &setup.problem;
    let basis = SpanBasis::from_members(&first.members)?;
    let mut out = Vec::new();

    let mut residual = 0.0f64;
    let mut cov = Vec::with_capacity(traj.len());
    for pt in traj {
        let e = Ensemble::new(pt.members.clone())?;
        residual = residual.max(subspace_residual(&e, &basis.a_cols));
        cov.push(covariance_norm(&e));
    }
    out.push(Finding::threshold("subspace-residual", residual, 1e-8));
    out.push(Finding::threshold("affine-drift", affine_drift(traj, &basis), 1e-9));

    if cfg.method == FlowKind::Teki {
        let (lambda_m, _) = lambda_bounds(&basis, &p.prior().eigenvalues(), p.lambda())?;
        let times: Vec<f64> = traj.iter().map(|pt| pt.t).collect();
        out.push(Finding::ratio(&collapse_bound_check(&times, &cov, lambda_m), 1.05));

        if cfg.model == ModelKind::LinearToy {
            let r = kkt_solutions(p, &basis)?;
            out.push(Finding::threshold("kkt-orthogonality", kkt_orthogonality(&r, &basis), 1e-10));
            out.push(Finding::threshold("map-identity", map_identity_check(&r, &basis), 1e-10));
            out.push(Finding::ratio(&convergence_bound_check(traj, &r, &basis), 1.05));
            let ric = riccati_check(traj, &r, &basis);
            out.push(Finding::threshold("riccati-eigen", ric.eigen.worst_ratio, 0.02));
            out.push(Finding::threshold("riccati-drift", ric.drift, 1e-2));
            out.push(Finding::ratio(&apriori_bound_check(traj, p)?, 1.01));
        }
    }
    Ok(out)
}
