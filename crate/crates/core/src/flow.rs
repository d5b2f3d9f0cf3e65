//! Continuous-time EKI and TEKI flows and their adaptive Euler integration.
//!
//! Member `j` evolves as
//!
//! ```text
//! du^(j)/dt = −(1/J) Σ_k E_jk (u^(k) − ū),
//! D_jk = ⟨Γ^(-1/2)(G(u^(j)) − y), Γ^(-1/2)(G(u^(k)) − Ḡ)⟩,
//! E_jk = D_jk + λ ⟨u^(j), u^(k) − ū⟩_K,
//! ```
//!
//! with `D` in place of `E` for the unregularized flow. The Euler step size
//! is `h_n = h0 / (‖E‖_F + δ)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::field::{norm_x, SpectralField};
use crate::kalman::{stats, Ensemble};
use crate::linalg::{axpy, dot, norm, Matrix, SymmetricEigen};
use crate::problem::InverseProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Eki,
    Teki,
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowKind::Eki => "eki",
            FlowKind::Teki => "teki",
        })
    }
}

impl FromStr for FlowKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eki" => Ok(FlowKind::Eki),
            "teki" => Ok(FlowKind::Teki),
            other => Err(Error::InvalidArgument(alloc::format!("unknown method `{other}`"))),
        }
    }
}

/// The `J × J` matrix `D` (EKI) or `E` (TEKI).
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub kind: FlowKind,
    pub entries: Matrix,
}

impl InteractionMatrix {
    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[(j, k)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.frobenius_norm()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.size()).map(|j| self.entries.row(j).iter().sum()).collect()
    }
}

/// Builds `D` or `E` from the cached forward evaluations of `e`.
pub fn interaction(e: &Ensemble, p: &InverseProblem, kind: FlowKind) -> Result<InteractionMatrix> {
    let evals = e.forward().ok_or(Error::MissingForwardCache)?;
    let st = stats(e.members(), evals)?;
    let j = e.len();
    let m = p.obs_dim();
    let precisions = p.noise().precisions(m);
    // Γ^(-1)(G(u^(j)) − y)
    let weighted_resid: Vec<Vec<f64>> = evals
        .iter()
        .map(|g| (0..m).map(|i| precisions[i] * (g[i] - p.data()[i])).collect())
        .collect();
    let mut entries = Matrix::zeros(j, j);
    for a in 0..j {
        for b in 0..j {
            entries[(a, b)] = dot(&weighted_resid[a], &st.centered_g[b]);
        }
    }
    if kind == FlowKind::Teki {
        let prec = p.prior_precisions();
        for a in 0..j {
            let wu: Vec<f64> = e.members()[a].coeffs().iter().zip(&prec).map(|(c, w)| c * w).collect();
            for b in 0..j {
                entries[(a, b)] += dot(&wu, &st.centered_u[b]);
            }
        }
    }
    Ok(InteractionMatrix { kind, entries })
}

/// `h0 / (‖E‖_F + δ)`.
pub fn adaptive_step_size(m: &InteractionMatrix, h0: f64, delta: f64) -> f64 {
    h0 / (m.frobenius_norm() + delta)
}

/// Velocity of every member, `−(1/J) Σ_k E_jk (u^(k) − ū)`, in spectral
/// coordinates.
pub fn velocity(e: &Ensemble, m: &InteractionMatrix) -> Vec<Vec<f64>> {
    let coeffs: Vec<&[f64]> = e.members().iter().map(|u| u.coeffs()).collect();
    let mean = e.mean();
    let centered: Vec<Vec<f64>> = coeffs
        .iter()
        .map(|c| c.iter().zip(mean.coeffs()).map(|(a, b)| a - b).collect())
        .collect();
    let inv_j = 1.0 / e.len() as f64;
    (0..e.len())
        .map(|j| {
            let mut v = vec![0.0; mean.coeffs().len()];
            for (k, col) in centered.iter().enumerate() {
                axpy(-inv_j * m.get(j, k), col, &mut v);
            }
            v
        })
        .collect()
}

/// Time, iteration count and ensemble of an integrated flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub n: usize,
    /// Step that produced this state; zero for the initial state.
    pub last_h: f64,
    pub ensemble: Ensemble,
}

impl FlowState {
    pub fn new(ensemble: Ensemble) -> Self {
        FlowState { t: 0.0, n: 0, last_h: 0.0, ensemble }
    }
}

fn advance(mut s: FlowState, p: &InverseProblem, kind: FlowKind, step: impl FnOnce(&InteractionMatrix) -> f64) -> Result<FlowState> {
    s.ensemble.evaluate(p.model().as_ref())?;
    let m = interaction(&s.ensemble, p, kind)?;
    let h = step(&m);
    let vel = velocity(&s.ensemble, &m);
    let members = s
        .ensemble
        .members()
        .iter()
        .zip(vel)
        .map(|(u, v)| {
            let mut c = u.coeffs().to_vec();
            axpy(h, &v, &mut c);
            SpectralField::new(*u.spec(), c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowState { t: s.t + h, n: s.n + 1, last_h: h, ensemble: Ensemble::new(members)? })
}

/// One explicit Euler step with the adaptive step size.
pub fn euler_step(s: FlowState, p: &InverseProblem, kind: FlowKind, h0: f64, delta: f64) -> Result<FlowState> {
    advance(s, p, kind, |m| adaptive_step_size(m, h0, delta))
}

/// One explicit Euler step of fixed size `h`.
pub fn euler_step_fixed(s: FlowState, p: &InverseProblem, kind: FlowKind, h: f64) -> Result<FlowState> {
    advance(s, p, kind, |_| h)
}

/// `‖C(u)‖_X` as the largest eigenvalue of the `J × J` Gram matrix.
pub fn covariance_norm(e: &Ensemble) -> f64 {
    let empty: Vec<[f64; 0]> = vec![[]; e.len()];
    let st = stats(e.members(), &empty).expect("ensemble is non-empty");
    let gram = st.state_gram();
    SymmetricEigen::new(&gram).values.last().copied().unwrap_or(0.0).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub h0: f64,
    pub delta: f64,
    pub snapshot_iters: Vec<usize>,
    /// Stop once the data misfit at the mean reaches the noise level.
    pub stop_at_noise_level: bool,
    /// Keep every ensemble in the record.
    pub keep_trajectory: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iterations: 23,
            h0: 0.02,
            delta: 0.05,
            snapshot_iters: vec![1, 5, 11, 17, 23],
            stop_at_noise_level: false,
            keep_trajectory: false,
        }
    }
}

/// Optional ground truth for error metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reference {
    pub truth: Option<SpectralField>,
    pub noise_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub t: f64,
    pub h: f64,
    /// `‖ū − u†‖_X / ‖u†‖_X`, NaN without a truth.
    pub rel_error: f64,
    /// `‖Γ^(-1/2)(y − G(ū))‖`.
    pub misfit: f64,
    /// NaN when unknown.
    pub noise_level: f64,
    pub cov_norm: f64,
    /// Objective at the mean: `½‖Γ^(-1/2)(G(ū) − y)‖²`, plus `(λ/2)‖ū‖²_K` for TEKI.
    pub loss: f64,
    /// `‖Γ^(-1/2)(y − G(u^(j)))‖` per member.
    pub member_misfit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub mean: SpectralField,
    pub first_member: SpectralField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub t: f64,
    pub members: Vec<SpectralField>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<MetricsRow>,
    pub snapshots: Vec<Snapshot>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub stopped_early: bool,
    /// Set when a step failed; rows up to the failure are kept.
    pub failure: Option<Error>,
}

/// Integrates the flow for `config.iterations` adaptive Euler steps,
/// recording metrics at the ensemble mean after every step.
pub fn run(initial: Ensemble, p: &InverseProblem, kind: FlowKind, config: &RunConfig, reference: &Reference) -> RunRecord {
    let mut record = RunRecord::default();
    let mut state = FlowState::new(initial);
    let truth = reference.truth.as_ref();
    let truth_norm = truth.map(norm_x);
    loop {
        let mean = state.ensemble.mean();
        let mut batch = state.ensemble.members().to_vec();
        batch.push(mean.clone());
        let mut evals = match p.model().apply_all(&batch) {
            Ok(v) => v,
            Err(e) => {
                record.failure = Some(e);
                break;
            }
        };
        let mean_eval = evals.pop().expect("batch includes the mean");
        let members = state.ensemble.members().to_vec();
        state.ensemble = Ensemble::with_forward(members, evals).expect("aligned evaluations");

        let misfit = p.misfit_norm_of(&mean_eval);
        let rel_error = match (truth, truth_norm) {
            (Some(u), Some(n)) => mean.sub(u).map(|d| norm_x(&d) / n).unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        let loss = match kind {
            FlowKind::Eki => p.misfit_of(&mean_eval),
            FlowKind::Teki => p.tikhonov_loss_of(&mean, &mean_eval).unwrap_or(f64::NAN),
        };
        let member_misfit = state.ensemble.forward().unwrap().iter().map(|g| p.misfit_norm_of(g)).collect();
        record.rows.push(MetricsRow {
            iter: state.n,
            t: state.t,
            h: state.last_h,
            rel_error,
            misfit,
            noise_level: reference.noise_level.unwrap_or(f64::NAN),
            cov_norm: covariance_norm(&state.ensemble),
            loss,
            member_misfit,
        });
        if state.n == 0 || config.snapshot_iters.contains(&state.n) {
            record.snapshots.push(Snapshot {
                iter: state.n,
                mean: mean.clone(),
                first_member: state.ensemble.members()[0].clone(),
            });
        }
        if config.keep_trajectory {
            record.trajectory.push(TrajectoryPoint {
                iter: state.n,
                t: state.t,
                members: state.ensemble.members().to_vec(),
            });
        }
        if state.n >= config.iterations {
            break;
        }
        if config.stop_at_noise_level {
            if let Some(level) = reference.noise_level {
                if misfit <= level {
                    record.stopped_early = true;
                    break;
                }
            }
        }
        state = match euler_step(state, p, kind, config.h0, config.delta) {
            Ok(s) => s,
            Err(e) => {
                record.failure = Some(e);
                break;
            }
        };
    }
    record
}

/// For a linear model `G = A`, compares the TEKI velocity with the
/// preconditioned gradient `−C(u) ∇I(u^(j))`,
/// `∇I(u) = Aᵀ Γ^(-1)(A u − y) + λ C₀^(-1) u`. Returns the largest
/// member-wise discrepancy relative to the larger of the two sides.
pub fn gradient_flow_residual(e: &Ensemble, p: &InverseProblem) -> Result<f64> {
    let a = p.model().linear_operator().ok_or(Error::NonlinearModel)?;
    let mut e = e.clone();
    e.evaluate(p.model().as_ref())?;
    let m = interaction(&e, p, FlowKind::Teki)?;
    let vel = velocity(&e, &m);
    let evals = e.forward().unwrap();
    let st = stats(e.members(), evals)?;
    let prec_obs = p.noise().precisions(p.obs_dim());
    let prec_prior = p.prior_precisions();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut diffs = Vec::with_capacity(e.len());
    for (u, v) in e.members().iter().zip(&vel) {
        let au = a.mul_vec(u.coeffs());
        let r: Vec<f64> = (0..au.len()).map(|i| prec_obs[i] * (au[i] - p.data()[i])).collect();
        let mut grad = a.tr_mul_vec(&r);
        for ((g, c), w) in grad.iter_mut().zip(u.coeffs()).zip(&prec_prior) {
            *g += w * c;
        }
        let cg = st.apply_cuu(&grad);
        let diff: Vec<f64> = v.iter().zip(&cg).map(|(x, y)| x + y).collect();
        scale = scale.max(norm(v)).max(norm(&cg));
        diffs.push(norm(&diff));
    }
    for d in diffs {
        worst = worst.max(d);
    }
    Ok(if scale == 0.0 { 0.0 } else { worst / scale })
}
