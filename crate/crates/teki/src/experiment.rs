//! Truth and data synthesis, single runs and the four-arm matrix.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use teki_core::field::{sample_cm, synthesize, CovarianceSpec, SpectralField};
use teki_core::flow::{self, FlowKind, Reference, RunRecord};
use teki_core::models::{lattice_points, random_left_sources, DarcyConfig, DarcyModel, EikonalConfig, EikonalModel, Point};
use teki_core::problem::synthesize_data;
use teki_core::rng::stream;
use teki_core::toy::LinearModel;
use teki_core::{Ensemble, ForwardModel, InverseProblem, NoiseSpec, ObsVector};

use crate::config::{ExperimentConfig, Init, ModelKind};
use crate::error::{io_err, Error, Result};
use crate::io::{fmt_f64, save_grid, save_metrics, save_obs, save_trajectory, Manifest};
use crate::parallel::Parallel;

/// Everything shared by the arms of one case and seed.
#[derive(Clone)]
pub struct Setup {
    pub truth: SpectralField,
    pub problem: InverseProblem,
    pub eta: ObsVector,
    pub noise_level: f64,
    pub sources: Vec<Point>,
    pub obs_points: Vec<Point>,
}

/// One draw with the case's `(α, a)`, expressed on the prior's basis.
pub fn build_truth(cfg: &ExperimentConfig) -> Result<SpectralField> {
    let prior = cfg.prior_spec()?;
    let (alpha, a) = cfg.truth_params();
    let spec = prior.with_alpha(alpha)?;
    let u = sample_cm(&spec, a, &mut stream(cfg.seed, "truth"));
    Ok(u.rebase(prior)?)
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<(Arc<dyn ForwardModel>, Vec<Point>, Vec<Point>)> {
    let obs_points = lattice_points(cfg.obs_per_axis);
    let model: Arc<dyn ForwardModel> = match cfg.model {
        ModelKind::Eikonal => {
            let sources = random_left_sources(cfg.sources, &mut stream(cfg.seed, "sources"));
            let mut ec = EikonalConfig::new(cfg.grid_n, sources.clone(), obs_points.clone(), cfg.gamma)?;
            ec.mollifier = cfg.obs_mollifier;
            let m = Arc::new(Parallel(Arc::new(EikonalModel(ec))));
            return Ok((m, sources, obs_points));
        }
        ModelKind::Darcy => {
            let mut dc = DarcyConfig::new(cfg.grid_n, obs_points.clone())?;
            dc.mollifier = cfg.obs_mollifier;
            Arc::new(Parallel(Arc::new(DarcyModel(dc))))
        }
        ModelKind::LinearToy => Arc::new(LinearModel::pointwise(&cfg.prior_spec()?, &obs_points)),
    };
    Ok((model, Vec::new(), obs_points))
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let truth = build_truth(cfg)?;
    let (model, sources, obs_points) = build_model(cfg)?;
    let noise = NoiseSpec::isotropic(cfg.gamma)?;
    let (y, eta) = synthesize_data(model.as_ref(), &truth, &noise, &mut stream(cfg.seed, "noise"))?;
    let problem = InverseProblem::new(model, y, noise, cfg.prior_spec()?, cfg.lambda)?;
    let noise_level = problem.noise_level(&eta);
    Ok(Setup { truth, problem, eta, noise_level, sources, obs_points })
}

pub fn build_initial_ensemble(cfg: &ExperimentConfig) -> Result<Ensemble> {
    let spec = cfg.prior_spec()?;
    let members = match cfg.init {
        Init::Random => {
            let mut rng = stream(cfg.seed, "init");
            let a = cfg.init_exponent();
            (0..cfg.ensemble_size).map(|_| sample_cm(&spec, a, &mut rng)).collect()
        }
        Init::KlBasis => kl_members(&spec, cfg.ensemble_size)?,
    };
    Ok(Ensemble::new(members)?)
}

/// The `j` largest-variance eigenfunctions as unit coefficient vectors.
pub fn kl_members(spec: &CovarianceSpec, j: usize) -> Result<Vec<SpectralField>> {
    let order = spec.modes_by_variance();
    if j > order.len() {
        return Err(Error::Config(format!("kl-basis needs {j} modes, truncation has {}", order.len())));
    }
    order[..j]
        .iter()
        .map(|&idx| {
            let mut c = vec![0.0; spec.modes()];
            c[idx] = 1.0;
            Ok(SpectralField::new(*spec, c)?)
        })
        .collect()
}

pub struct Outcome {
    pub record: RunRecord,
    pub manifest: Manifest,
}

impl Outcome {
    pub fn succeeded(&self) -> bool {
        self.record.failure.is_none()
    }
}

/// Runs one arm against a prepared setup; nothing is written.
pub fn run_with_setup(cfg: &ExperimentConfig, setup: &Setup) -> Result<Outcome> {
    let start = Instant::now();
    let initial = build_initial_ensemble(cfg)?;
    let reference = Reference { truth: Some(setup.truth.clone()), noise_level: Some(setup.noise_level) };
    let record = flow::run(initial, &setup.problem, cfg.method, &cfg.run_config(), &reference);
    let wall = start.elapsed().as_secs_f64();

    let mut m = Manifest::new();
    for (k, v) in cfg.entries() {
        m.set(format!("config.{k}"), v);
    }
    m.set("sources", points_text(&setup.sources));
    m.set("obs_points", points_text(&setup.obs_points));
    m.set("noise_norm", fmt_f64(teki_core::linalg::norm(&setup.eta)));
    m.set("noise_level", fmt_f64(setup.noise_level));
    m.set("version", env!("CARGO_PKG_VERSION"));
    m.set("wall_time", format!("{wall:.3}"));
    m.set("stopped_early", record.stopped_early);
    m.set(
        "status",
        match &record.failure {
            None => "ok".to_string(),
            Some(e) => format!("failed at iteration {}: {e}", record.rows.len()),
        },
    );
    Ok(Outcome { record, manifest: m })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    run_with_setup(cfg, &build_setup(cfg)?)
}

fn points_text(pts: &[Point]) -> String {
    let parts: Vec<String> = pts.iter().map(|p| format!("{}:{}", fmt_f64(p.x1), fmt_f64(p.x2))).collect();
    parts.join(";")
}

/// Writes `metrics.csv`, the snapshot fields, `truth.csv`, `data.csv`,
/// `trajectory.csv` when recorded, and `manifest.txt` into `dir`.
///
/// `mean_iter1.csv` holds initial member 0 rather than the mean; every
/// other snapshot is the ensemble mean.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, setup: &Setup, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_metrics(&dir.join("metrics.csv"), &outcome.record.rows)?;
    let snaps = &outcome.record.snapshots;
    for s in snaps {
        if s.iter != 1 {
            save_grid(&dir.join(format!("mean_iter{}.csv", s.iter)), &synthesize(&s.mean, cfg.grid_n))?;
        }
    }
    if cfg.snapshot_iters.contains(&1) && outcome.record.rows.len() > 1 {
        if let Some(first) = snaps.iter().find(|s| s.iter == 0) {
            save_grid(&dir.join("mean_iter1.csv"), &synthesize(&first.first_member, cfg.grid_n))?;
        }
    }
    save_grid(&dir.join("truth.csv"), &synthesize(&setup.truth, cfg.grid_n))?;
    save_obs(&dir.join("data.csv"), setup.problem.data())?;
    if cfg.record_trajectory {
        save_trajectory(&dir.join("trajectory.csv"), &outcome.record.trajectory)?;
    }
    outcome.manifest.save(&dir.join("manifest.txt"))
}

/// Runs and writes one experiment into `cfg.output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let outcome = run_with_setup(cfg, &setup)?;
    write_outputs(&cfg.output_dir, cfg, &setup, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: String,
    pub method: FlowKind,
    pub init: Init,
    pub final_rel_error: f64,
    pub final_misfit: f64,
    pub noise_level: f64,
    pub status: String,
}

impl ArmSummary {
    pub fn below_noise(&self) -> bool {
        self.final_misfit < self.noise_level
    }
}

pub const ARMS: [(FlowKind, Init); 4] = [
    (FlowKind::Eki, Init::Random),
    (FlowKind::Eki, Init::KlBasis),
    (FlowKind::Teki, Init::Random),
    (FlowKind::Teki, Init::KlBasis),
];

pub fn arm_config(base: &ExperimentConfig, method: FlowKind, init: Init) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.method = method;
    cfg.init = init;
    cfg.prior_a = None;
    cfg.output_dir = base.output_dir.join(format!("{method}-{init}"));
    cfg
}

/// Runs all four method × initialization arms on one shared truth and data
/// set, writing each arm under `<output_dir>/<method>-<init>/` and the
/// summaries under `output_dir`. An arm that fails is reported in the
/// summary without stopping the others.
pub fn run_matrix(base: &ExperimentConfig) -> Result<Vec<ArmSummary>> {
    let setup = build_setup(base)?;
    let arms: Vec<(ArmSummary, Option<RunRecord>)> = ARMS
        .par_iter()
        .map(|&(method, init)| {
            let cfg = arm_config(base, method, init);
            let arm = format!("{method}-{init}");
            let result = run_with_setup(&cfg, &setup).and_then(|o| {
                write_outputs(&cfg.output_dir, &cfg, &setup, &o)?;
                Ok(o)
            });
            match result {
                Ok(o) => {
                    let last = o.record.rows.last();
                    let summary = ArmSummary {
                        arm,
                        method,
                        init,
                        final_rel_error: last.map_or(f64::NAN, |r| r.rel_error),
                        final_misfit: last.map_or(f64::NAN, |r| r.misfit),
                        noise_level: setup.noise_level,
                        status: o.manifest.get("status").unwrap_or("ok").to_string(),
                    };
                    (summary, Some(o.record))
                }
                Err(e) => {
                    let summary = ArmSummary {
                        arm,
                        method,
                        init,
                        final_rel_error: f64::NAN,
                        final_misfit: f64::NAN,
                        noise_level: setup.noise_level,
                        status: format!("failed: {e}"),
                    };
                    (summary, None)
                }
            }
        })
        .collect();

    std::fs::create_dir_all(&base.output_dir).map_err(io_err(&base.output_dir))?;
    let summaries: Vec<ArmSummary> = arms.iter().map(|(s, _)| s.clone()).collect();
    write_text(&base.output_dir.join("summary.csv"), &summary_csv(&summaries))?;
    write_text(&base.output_dir.join("combined.csv"), &combined_csv(&arms))?;
    Ok(summaries)
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn summary_csv(rows: &[ArmSummary]) -> String {
    let mut out = String::from("arm,method,init,final_rel_error,final_misfit,noise_level,below_noise,status\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.arm,
            r.method,
            r.init,
            fmt_f64(r.final_rel_error),
            fmt_f64(r.final_misfit),
            fmt_f64(r.noise_level),
            r.below_noise(),
            r.status.replace(',', ";")
        );
    }
    out
}

/// Per-iteration relative error and misfit of every arm side by side.
fn combined_csv(arms: &[(ArmSummary, Option<RunRecord>)]) -> String {
    let mut out = String::from("iter");
    for (s, _) in arms {
        let _ = write!(out, ",{0}.t,{0}.rel_error,{0}.misfit", s.arm);
    }
    out.push('\n');
    let len = arms.iter().filter_map(|(_, r)| r.as_ref().map(|r| r.rows.len())).max().unwrap_or(0);
    for i in 0..len {
        let _ = write!(out, "{i}");
        for (_, r) in arms {
            match r.as_ref().and_then(|r| r.rows.get(i)) {
                Some(row) => {
                    let _ = write!(out, ",{},{},{}", fmt_f64(row.t), fmt_f64(row.rel_error), fmt_f64(row.misfit));
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}
