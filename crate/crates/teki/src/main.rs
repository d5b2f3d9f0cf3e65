use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use teki::check::check_dir;
use teki::experiment::{build_model, run_and_write, run_matrix};
use teki::io::{load_grid, write_obs};
use teki::{ExperimentConfig, ModelKind};
use teki_core::models::{darcy_forward_grid, eikonal_forward_grid, DarcyConfig, EikonalConfig};

#[derive(Parser)]
#[command(name = "teki", version, about = "Ensemble Kalman inversion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the four method × initialization arms on shared data.
    Matrix {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a run recorded with record_trajectory=true.
    Check { dir: PathBuf },
    /// One forward solve on a log-field grid file; prints observations.
    Forward {
        model: ModelKind,
        field: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>, output: Option<PathBuf>) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<bool> {
    match Cli::parse().command {
        Command::Run { config, seed, output } => {
            let cfg = load_config(&config, seed, output)?;
            let outcome = run_and_write(&cfg)?;
            if let Some(last) = outcome.record.rows.last() {
                println!(
                    "iter={} t={:.6} rel_error={:.6e} misfit={:.6e} noise_level={:.6e}",
                    last.iter, last.t, last.rel_error, last.misfit, last.noise_level
                );
            }
            if let Some(e) = &outcome.record.failure {
                eprintln!("run failed: {e}");
            }
            Ok(outcome.succeeded())
        }
        Command::Matrix { config, seed, output } => {
            let cfg = load_config(&config, seed, output)?;
            let rows = run_matrix(&cfg)?;
            print!("{}", teki::experiment::summary_csv(&rows));
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::Check { dir } => {
            let findings = check_dir(&dir)?;
            for f in &findings {
                println!("{f}");
            }
            Ok(findings.iter().all(|f| f.passed))
        }
        Command::Forward { model, field, config, seed } => {
            let mut cfg = match config {
                Some(path) => load_config(&path, seed, None)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.model = model;
            let grid = load_grid(&field)?;
            cfg.grid_n = grid.n();
            let (_, sources, obs_points) = build_model(&cfg)?;
            let y = match model {
                ModelKind::Eikonal => {
                    let mut ec = EikonalConfig::new(grid.n(), sources, obs_points, cfg.gamma)?;
                    ec.mollifier = cfg.obs_mollifier;
                    eikonal_forward_grid(&grid, &ec)?
                }
                ModelKind::Darcy => {
                    let mut dc = DarcyConfig::new(grid.n(), obs_points)?;
                    dc.mollifier = cfg.obs_mollifier;
                    darcy_forward_grid(&grid, &dc)?
                }
                ModelKind::LinearToy => bail!("linear-toy acts on spectral coefficients, not grid files"),
            };
            write_obs(&mut std::io::stdout().lock(), &y)?;
            Ok(true)
        }
    }
}
