//! Numerical checks for the analytical behaviour of the continuous flows,
//! all computed in orthonormal coordinates of the initial ensemble span.
//!
//! `A = span{u₀^(j)}`, `B = span{u₀^(j) − ū₀}`, `u₀⊥ = ū₀ − P_B ū₀`. For a
//! linear map the posterior precision is `Ω = λ C₀^(-1) + AᵀΓ^(-1)A` and the
//! TEKI flow converges to `u₀⊥ + u†_B` where `u†_B` minimizes the Tikhonov
//! loss over `u₀⊥ + B`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::field::{norm_k, SpectralField};
use crate::flow::TrajectoryPoint;
use crate::kalman::Ensemble;
use crate::linalg::{axpy, coordinates, dot, norm, orthonormal_basis, project, Cholesky, Matrix, SymmetricEigen};
use crate::problem::{ForwardModel, InverseProblem, ObsVector};

/// Relative rank tolerance for the span bases.
pub const SPAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpanBasis {
    /// Orthonormal basis of `A`, spectral coordinates.
    pub a_cols: Vec<Vec<f64>>,
    /// Orthonormal basis of `B`.
    pub b_cols: Vec<Vec<f64>>,
    pub u_perp0: Vec<f64>,
    /// `C(u(0))` in `B` coordinates.
    pub initial_cov_b: Matrix,
    pub members: usize,
}

fn gram_in(basis: &[Vec<f64>], vectors: &[Vec<f64>]) -> Matrix {
    let r = basis.len();
    let mut c = Matrix::zeros(r, r);
    let inv = 1.0 / vectors.len() as f64;
    for v in vectors {
        let x = coordinates(basis, v);
        for a in 0..r {
            for b in 0..r {
                c[(a, b)] += inv * x[a] * x[b];
            }
        }
    }
    c
}

fn centered(members: &[SpectralField]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mean = SpectralField::mean(members).expect("members share a spec").into_coeffs();
    let cols = members
        .iter()
        .map(|u| u.coeffs().iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    (mean, cols)
}

impl SpanBasis {
    pub fn from_ensemble(e: &Ensemble) -> Result<Self> {
        Self::from_members(e.members())
    }

    pub fn from_members(members: &[SpectralField]) -> Result<Self> {
        let raw: Vec<Vec<f64>> = members.iter().map(|u| u.coeffs().to_vec()).collect();
        let a_cols = orthonormal_basis(&raw, SPAN_TOL);
        let (mean, cols) = centered(members);
        let b_cols = orthonormal_basis(&cols, SPAN_TOL);
        if a_cols.is_empty() || b_cols.is_empty() {
            return Err(Error::DegenerateSpan);
        }
        let pb = project(&b_cols, &mean);
        let u_perp0 = mean.iter().zip(&pb).map(|(a, b)| a - b).collect();
        let initial_cov_b = gram_in(&b_cols, &cols);
        Ok(SpanBasis { a_cols, b_cols, u_perp0, initial_cov_b, members: members.len() })
    }

    pub fn dim_a(&self) -> usize {
        self.a_cols.len()
    }

    pub fn dim_b(&self) -> usize {
        self.b_cols.len()
    }

    pub fn project_b(&self, v: &[f64]) -> Vec<f64> {
        project(&self.b_cols, v)
    }

    /// `C(u)` of an ensemble expressed in `B` coordinates.
    pub fn covariance_b(&self, members: &[SpectralField]) -> Matrix {
        gram_in(&self.b_cols, &centered(members).1)
    }

    fn from_b_coords(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.u_perp0.len()];
        for (q, c) in self.b_cols.iter().zip(x) {
            axpy(*c, q, &mut out);
        }
        out
    }
}

/// Extreme values of `λ‖v‖²_K / ‖v‖²_X` over `A`.
pub fn lambda_bounds(basis: &SpanBasis, eigenvalues: &[f64], lambda: f64) -> Result<(f64, f64)> {
    let r = basis.dim_a();
    if r == 0 {
        return Err(Error::DegenerateSpan);
    }
    let mut m = Matrix::zeros(r, r);
    for a in 0..r {
        for b in 0..=a {
            let v: f64 = basis.a_cols[a]
                .iter()
                .zip(&basis.a_cols[b])
                .zip(eigenvalues)
                .map(|((x, y), l)| x * y / l)
                .sum();
            m[(a, b)] = lambda * v;
            m[(b, a)] = lambda * v;
        }
    }
    let eig = SymmetricEigen::new(&m);
    Ok((eig.values[0], eig.values[r - 1]))
}

/// Outcome of one check: the worst observed ratio against its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub worst_ratio: f64,
    pub passed: bool,
    /// Flow time of the worst ratio.
    pub worst_at: f64,
}

impl CheckReport {
    fn new(name: &str, limit: f64, ratios: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (mut worst, mut at) = (0.0f64, 0.0);
        let mut finite = true;
        for (t, r) in ratios {
            if !r.is_finite() {
                finite = false;
            }
            if r > worst || r.is_nan() {
                worst = r;
                at = t;
            }
        }
        CheckReport { name: name.into(), worst_ratio: worst, passed: finite && worst <= limit, worst_at: at }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} worst_ratio={:.16e} worst_at={:.16e} passed={}",
            self.name, self.worst_ratio, self.worst_at, self.passed
        )
    }
}

/// `‖C(t)‖_X ≤ 1/(‖C(0)‖_X^(-1) + 2λ_m t)` with 5% slack.
pub fn collapse_bound_check(times: &[f64], cov_norms: &[f64], lambda_m: f64) -> CheckReport {
    let c0 = cov_norms.first().copied().unwrap_or(0.0);
    let ratios = times.iter().zip(cov_norms).map(|(&t, &c)| {
        let bound = 1.0 / (1.0 / c0 + 2.0 * lambda_m * t);
        (t, if c == 0.0 { 0.0 } else { c / bound })
    });
    CheckReport::new("collapse", 1.05, ratios)
}

/// Limit points and constants of a linear problem restricted to the span.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblemRestriction {
    pub a_mat: Matrix,
    pub omega: Matrix,
    /// `Q_Bᵀ Ω Q_B`.
    pub omega_b: Matrix,
    pub omega_b_sqrt: Matrix,
    pub u_dagger: Vec<f64>,
    pub u_dagger_b: Vec<f64>,
    /// `Ω(u†_B + u₀⊥) − AᵀΓ^(-1)y`; X-orthogonal to `B`.
    pub v_dagger: Vec<f64>,
    pub m0: f64,
}

impl LinearProblemRestriction {
    /// `‖v‖²_Z = ⟨Ωv, v⟩_X`.
    pub fn z_norm_sq(&self, v: &[f64]) -> f64 {
        dot(&self.omega.mul_vec(v), v)
    }
}

/// Solves the unconstrained and `B`-constrained normal equations.
pub fn kkt_solutions(p: &InverseProblem, basis: &SpanBasis) -> Result<LinearProblemRestriction> {
    let a = p.model().linear_operator().ok_or(Error::NonlinearModel)?.clone();
    let k = a.cols();
    let w = p.noise().precisions(p.obs_dim());
    let mut omega = Matrix::zeros(k, k);
    for (i, wi) in w.iter().enumerate() {
        let row = a.row(i);
        for r in 0..k {
            let s = wi * row[r];
            if s == 0.0 {
                continue;
            }
            for c in 0..k {
                omega[(r, c)] += s * row[c];
            }
        }
    }
    for (r, pk) in p.prior_precisions().iter().enumerate() {
        omega[(r, r)] += pk;
    }
    omega.symmetrize();
    let weighted_y: Vec<f64> = p.data().iter().zip(&w).map(|(y, wi)| y * wi).collect();
    let rhs = a.tr_mul_vec(&weighted_y);

    let full = Cholesky::new(&omega).map_err(|_| Error::SingularSystem("posterior precision"))?;
    let mut u_dagger = full.solve(&rhs);
    axpy(-1.0, &basis.u_perp0, &mut u_dagger);

    let r = basis.dim_b();
    let omega_q: Vec<Vec<f64>> = basis.b_cols.iter().map(|q| omega.mul_vec(q)).collect();
    let mut omega_b = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            omega_b[(i, j)] = dot(&basis.b_cols[i], &omega_q[j]);
        }
    }
    omega_b.symmetrize();
    let mut reduced_rhs = rhs.clone();
    axpy(-1.0, &omega.mul_vec(&basis.u_perp0), &mut reduced_rhs);
    let chol_b = Cholesky::new(&omega_b).map_err(|_| Error::SingularSystem("restricted precision"))?;
    let coords = chol_b.solve(&coordinates(&basis.b_cols, &reduced_rhs));
    let u_dagger_b = basis.from_b_coords(&coords);

    let mut limit = u_dagger_b.clone();
    axpy(1.0, &basis.u_perp0, &mut limit);
    let mut v_dagger = omega.mul_vec(&limit);
    axpy(-1.0, &rhs, &mut v_dagger);

    let omega_b_sqrt = SymmetricEigen::new(&omega_b).map(|x| libm::sqrt(x.max(0.0)));
    let d0 = omega_b_sqrt.mul(&basis.initial_cov_b).mul(&omega_b_sqrt);
    let m0 = SymmetricEigen::new(&d0).values[0];
    Ok(LinearProblemRestriction { a_mat: a, omega, omega_b, omega_b_sqrt, u_dagger, u_dagger_b, v_dagger, m0 })
}

/// Largest `|⟨v†, b⟩_X|` over the `B` basis, relative to `‖v†‖ + ‖AᵀΓ^(-1)y‖`-type scale.
pub fn kkt_orthogonality(r: &LinearProblemRestriction, basis: &SpanBasis) -> f64 {
    let scale = norm(&r.omega.mul_vec(&r.u_dagger_b)).max(norm(&r.v_dagger)).max(1.0);
    basis.b_cols.iter().map(|b| dot(b, &r.v_dagger).abs() / scale).fold(0.0, f64::max)
}

/// X-norm of `u†_B − (P_B u† + Ω_B^(-1) P_B Ω P_⊥ u†)`.
pub fn map_identity_check(r: &LinearProblemRestriction, basis: &SpanBasis) -> f64 {
    let pb_u = basis.project_b(&r.u_dagger);
    let perp: Vec<f64> = r.u_dagger.iter().zip(&pb_u).map(|(a, b)| a - b).collect();
    let coupled = coordinates(&basis.b_cols, &r.omega.mul_vec(&perp));
    let chol = Cholesky::new(&r.omega_b).expect("restricted precision is positive definite");
    let mut rhs = pb_u;
    axpy(1.0, &basis.from_b_coords(&chol.solve(&coupled)), &mut rhs);
    let diff: Vec<f64> = r.u_dagger_b.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    norm(&diff)
}

/// `e = u − u₀⊥ − u†_B`.
pub fn limit_error(u: &SpectralField, r: &LinearProblemRestriction, basis: &SpanBasis) -> Vec<f64> {
    u.coeffs()
        .iter()
        .zip(&basis.u_perp0)
        .zip(&r.u_dagger_b)
        .map(|((x, a), b)| x - a - b)
        .collect()
}

/// `‖e^(j)(t)‖²_Z ≤ ‖e^(j)(0)‖²_Z / (1 + 2m₀t)` per member, 5% slack.
pub fn convergence_bound_check(
    trajectory: &[TrajectoryPoint],
    r: &LinearProblemRestriction,
    basis: &SpanBasis,
) -> CheckReport {
    let Some(first) = trajectory.first() else {
        return CheckReport::new("convergence", 1.05, []);
    };
    let e0: Vec<f64> = first.members.iter().map(|u| r.z_norm_sq(&limit_error(u, r, basis))).collect();
    let ratios = trajectory.iter().flat_map(|pt| {
        let e0 = &e0;
        pt.members.iter().enumerate().map(move |(j, u)| {
            let et = r.z_norm_sq(&limit_error(u, r, basis));
            let ratio = if e0[j] == 0.0 {
                if et <= f64::MIN_POSITIVE { 0.0 } else { f64::INFINITY }
            } else {
                et * (1.0 + 2.0 * r.m0 * pt.t) / e0[j]
            };
            (pt.t, ratio)
        })
    });
    CheckReport::new("convergence", 1.05, ratios)
}

/// Riccati decay of `D(t) = Ω_B^(1/2) C_B(t) Ω_B^(1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiReport {
    /// Worst relative eigenvalue error against `1/(λ(0)^(-1) + 2t)`.
    pub eigen: CheckReport,
    /// Worst `‖D v − (vᵀDv) v‖ / ‖D‖` over the initial eigenvectors `v`.
    pub drift: f64,
    pub passed: bool,
}

pub fn riccati_check(trajectory: &[TrajectoryPoint], r: &LinearProblemRestriction, basis: &SpanBasis) -> RiccatiReport {
    let d_at = |members: &[SpectralField]| {
        let c = basis.covariance_b(members);
        r.omega_b_sqrt.mul(&c).mul(&r.omega_b_sqrt)
    };
    let Some(first) = trajectory.first() else {
        let eigen = CheckReport::new("riccati", 0.02, []);
        return RiccatiReport { eigen, drift: 0.0, passed: true };
    };
    let initial = SymmetricEigen::new(&d_at(&first.members));
    let top = initial.values.last().copied().unwrap_or(0.0).abs();
    let dim = initial.values.len();
    let mut drift = 0.0f64;
    let mut ratios = Vec::new();
    for pt in trajectory {
        let d = d_at(&pt.members);
        let eig = SymmetricEigen::new(&d);
        let mut predicted: Vec<f64> = initial
            .values
            .iter()
            .map(|&l0| if l0 <= 1e-12 * top { 0.0 } else { 1.0 / (1.0 / l0 + 2.0 * pt.t) })
            .collect();
        predicted.sort_by(f64::total_cmp);
        for (mu, pred) in eig.values.iter().zip(&predicted) {
            let err = if *pred == 0.0 {
                if mu.abs() <= 1e-12 * top { 0.0 } else { f64::INFINITY }
            } else {
                (mu - pred).abs() / pred
            };
            ratios.push((pt.t, err));
        }
        let d_norm = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if d_norm > 0.0 {
            for col in 0..dim {
                let v = initial.vectors.column(col);
                let dv = d.mul_vec(&v);
                let rq = dot(&v, &dv);
                let mut off = dv;
                axpy(-rq, &v, &mut off);
                drift = drift.max(norm(&off) / d_norm);
            }
        }
    }
    let eigen = CheckReport::new("riccati", 0.02, ratios);
    let passed = eigen.passed && drift <= 1e-2;
    RiccatiReport { eigen, drift, passed }
}

/// `λ‖u^(j)(t)‖²_K ≤ 2 I(u^(j)(0))` per member, 1% slack.
pub fn apriori_bound_check(trajectory: &[TrajectoryPoint], p: &InverseProblem) -> Result<CheckReport> {
    let Some(first) = trajectory.first() else {
        return Ok(CheckReport::new("apriori", 1.01, []));
    };
    let bounds = first
        .members
        .iter()
        .map(|u| p.tikhonov_loss(u).map(|l| 2.0 * l))
        .collect::<Result<Vec<_>>>()?;
    let mut ratios = Vec::new();
    for pt in trajectory {
        for (u, b) in pt.members.iter().zip(&bounds) {
            let lhs = p.lambda() * norm_k(u) * norm_k(u);
            let ratio = if *b == 0.0 {
                if lhs == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                lhs / b
            };
            ratios.push((pt.t, ratio));
        }
    }
    Ok(CheckReport::new("apriori", 1.01, ratios))
}

/// Quintic smoothstep cutoff: 1 below `m`, 0 above `m + 1`, C² in between.
pub fn cutoff(m: f64, x: f64) -> f64 {
    let s = (x - m).clamp(0.0, 1.0);
    1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// `G̃(u) = φ_M(‖u‖_K) G(u)`.
#[derive(Clone)]
pub struct BoundedModel {
    inner: Arc<dyn ForwardModel>,
    m: f64,
}

impl fmt::Debug for BoundedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedModel").field("m", &self.m).finish_non_exhaustive()
    }
}

pub fn bounded_wrap(model: Arc<dyn ForwardModel>, m: f64) -> Result<BoundedModel> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("cutoff radius must be positive, got {m}")));
    }
    Ok(BoundedModel { inner: model, m })
}

impl BoundedModel {
    pub fn radius(&self) -> f64 {
        self.m
    }
}

impl ForwardModel for BoundedModel {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn apply(&self, u: &SpectralField) -> Result<ObsVector> {
        let phi = cutoff(self.m, norm_k(u));
        if phi == 0.0 {
            return Ok(ObsVector::zeros(self.inner.obs_dim()));
        }
        let g = self.inner.apply(u)?;
        ObsVector::new(g.iter().map(|v| phi * v).collect())
    }
}

/// For `t ≥ T`: `‖u^(j)(t)‖_K ≤ max{‖u^(j)(T)‖_K, M + √(2λ_M J/(λ_m T)) + 1}`,
/// 5% slack. `u^(j)(T)` is read at the first recorded time `≥ T`.
pub fn nonlinear_bound_check(
    trajectory: &[TrajectoryPoint],
    t_start: f64,
    lambda_m: f64,
    lambda_big_m: f64,
    m: f64,
) -> CheckReport {
    let Some(start) = trajectory.iter().position(|pt| pt.t >= t_start) else {
        return CheckReport::new("nonlinear-bound", 1.05, []);
    };
    let j = trajectory[start].members.len() as f64;
    let floor = m + libm::sqrt(2.0 * lambda_big_m * j / (lambda_m * t_start)) + 1.0;
    let caps: Vec<f64> = trajectory[start].members.iter().map(|u| norm_k(u).max(floor)).collect();
    let ratios = trajectory[start..]
        .iter()
        .flat_map(|pt| pt.members.iter().zip(&caps).map(move |(u, c)| (pt.t, norm_k(u) / c)));
    CheckReport::new("nonlinear-bound", 1.05, ratios)
}

/// Largest X-distance a member's component orthogonal to `B` moved from its
/// initial value.
pub fn affine_drift(trajectory: &[TrajectoryPoint], basis: &SpanBasis) -> f64 {
    let perp = |u: &SpectralField| {
        let pb = basis.project_b(u.coeffs());
        u.coeffs().iter().zip(&pb).map(|(a, b)| a - b).collect::<Vec<f64>>()
    };
    let Some(first) = trajectory.first() else {
        return 0.0;
    };
    let initial: Vec<Vec<f64>> = first.members.iter().map(perp).collect();
    let mut worst = 0.0f64;
    for pt in trajectory {
        for (u, p0) in pt.members.iter().zip(&initial) {
            let d: Vec<f64> = perp(u).iter().zip(p0).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&d));
        }
    }
    worst
}
