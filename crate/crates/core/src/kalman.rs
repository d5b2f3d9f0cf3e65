//! Discrete ensemble Kalman inversion (EKI) and its Tikhonov-regularized
//! variant (TEKI).
//!
//! Covariances are never formed over the state or observation dimension.
//! With centered factors `U_c` (states) and `P_c` (predictions) and a
//! diagonal noise precision `W = Σ^(-1)`, the gain is applied through
//!
//! ```text
//! B^up (B^pp + Σ)^(-1) r = (1/J) U_c (I_J + (1/J) P_cᵀ W P_c)^(-1) P_cᵀ W r,
//! ```
//!
//! so each step costs one `J × J` Cholesky factorization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{CovarianceSpec, SpectralField};
use crate::linalg::{axpy, dot, norm, project, Cholesky, Matrix};
use crate::problem::{ForwardModel, InverseProblem, ObsVector};
use crate::rng::GaussianSource;

/// `J ≥ 2` members sharing one covariance spec, with optional cached
/// forward evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<SpectralField>,
    forward: Option<Vec<ObsVector>>,
}

impl Ensemble {
    pub fn new(members: Vec<SpectralField>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::EnsembleTooSmall(members.len()));
        }
        let spec = *members[0].spec();
        if members.iter().any(|m| m.spec() != &spec) {
            return Err(Error::IncompatibleSpecs);
        }
        Ok(Ensemble { members, forward: None })
    }

    /// Ensemble with forward evaluations already known.
    pub fn with_forward(members: Vec<SpectralField>, forward: Vec<ObsVector>) -> Result<Self> {
        let mut e = Ensemble::new(members)?;
        if forward.len() != e.members.len() {
            return Err(Error::DimensionMismatch { expected: e.members.len(), got: forward.len() });
        }
        e.forward = Some(forward);
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn spec(&self) -> &CovarianceSpec {
        self.members[0].spec()
    }

    pub fn members(&self) -> &[SpectralField] {
        &self.members
    }

    pub fn into_members(self) -> Vec<SpectralField> {
        self.members
    }

    pub fn forward(&self) -> Option<&[ObsVector]> {
        self.forward.as_deref()
    }

    pub fn mean(&self) -> SpectralField {
        SpectralField::mean(&self.members).expect("ensemble members share a spec")
    }

    /// Fills the forward cache if it is empty.
    pub fn evaluate(&mut self, model: &dyn ForwardModel) -> Result<()> {
        if self.forward.is_none() {
            self.forward = Some(model.apply_all(&self.members)?);
        }
        Ok(())
    }

    pub fn evaluated(mut self, model: &dyn ForwardModel) -> Result<Self> {
        self.evaluate(model)?;
        Ok(self)
    }

    fn forward_or_eval(&self, model: &dyn ForwardModel) -> Result<alloc::borrow::Cow<'_, [ObsVector]>> {
        match &self.forward {
            Some(f) => Ok(alloc::borrow::Cow::Borrowed(f.as_slice())),
            None => Ok(alloc::borrow::Cow::Owned(model.apply_all(&self.members)?)),
        }
    }
}

/// Empirical means and centered factors, normalized by `1/J`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean_u: Vec<f64>,
    pub mean_g: Vec<f64>,
    /// `u^(j) − ū`, one column per member.
    pub centered_u: Vec<Vec<f64>>,
    /// `G(u^(j)) − Ḡ`, one column per member.
    pub centered_g: Vec<Vec<f64>>,
}

fn mean_and_centered<V: AsRef<[f64]>>(cols: &[V]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = cols[0].as_ref().len();
    let mut mean = vec![0.0; dim];
    for c in cols {
        axpy(1.0, c.as_ref(), &mut mean);
    }
    let inv = 1.0 / cols.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    let centered = cols
        .iter()
        .map(|c| c.as_ref().iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    (mean, centered)
}

/// Ensemble statistics for members and their (index-aligned) evaluations.
pub fn stats<V: AsRef<[f64]>>(members: &[SpectralField], evals: &[V]) -> Result<EnsembleStats> {
    if members.is_empty() {
        return Err(Error::EnsembleTooSmall(0));
    }
    if evals.len() != members.len() {
        return Err(Error::DimensionMismatch { expected: members.len(), got: evals.len() });
    }
    let coeffs: Vec<&[f64]> = members.iter().map(|m| m.coeffs()).collect();
    let (mean_u, centered_u) = mean_and_centered(&coeffs);
    let (mean_g, centered_g) = mean_and_centered(evals);
    Ok(EnsembleStats { mean_u, mean_g, centered_u, centered_g })
}

impl EnsembleStats {
    pub fn size(&self) -> usize {
        self.centered_u.len()
    }

    /// `C^uu v`.
    pub fn apply_cuu(&self, v: &[f64]) -> Vec<f64> {
        self.apply_outer(&self.centered_u, &self.centered_u, v)
    }

    /// `C^up w`.
    pub fn apply_cup(&self, w: &[f64]) -> Vec<f64> {
        self.apply_outer(&self.centered_u, &self.centered_g, w)
    }

    /// `C^pp w`.
    pub fn apply_cpp(&self, w: &[f64]) -> Vec<f64> {
        self.apply_outer(&self.centered_g, &self.centered_g, w)
    }

    fn apply_outer(&self, left: &[Vec<f64>], right: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; left[0].len()];
        let inv = 1.0 / self.size() as f64;
        for (l, r) in left.iter().zip(right) {
            axpy(inv * dot(r, w), l, &mut out);
        }
        out
    }

    /// `(1/J) U_cᵀ U_c`; its nonzero spectrum equals that of `C^uu`.
    pub fn state_gram(&self) -> Matrix {
        let j = self.size();
        let mut g = Matrix::zeros(j, j);
        let inv = 1.0 / j as f64;
        for a in 0..j {
            for b in 0..=a {
                let v = inv * dot(&self.centered_u[a], &self.centered_u[b]);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }
}

/// Perturbed-observation mode: `Γ' = 0` or `Γ' = Γ` (resp. `Σ' = 0`, `Σ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Perturbation {
    #[default]
    None,
    Full,
}

/// Applies the ensemble-space Kalman gain to each member's residual.
///
/// `centered_p` and `residuals` live in the (possibly augmented) data space,
/// `precisions` is the diagonal of `Σ^(-1)` there.
fn kalman_update(
    members: &[SpectralField],
    centered_u: &[Vec<f64>],
    centered_p: &[Vec<f64>],
    precisions: &[f64],
    residuals: &[Vec<f64>],
) -> Result<Vec<SpectralField>> {
    let j = members.len();
    let inv_j = 1.0 / j as f64;
    // W P_c
    let weighted: Vec<Vec<f64>> = centered_p
        .iter()
        .map(|p| p.iter().zip(precisions).map(|(a, w)| a * w).collect())
        .collect();
    let mut system = Matrix::identity(j);
    for a in 0..j {
        for b in 0..=a {
            let v = inv_j * dot(&weighted[a], &centered_p[b]);
            system[(a, b)] += v;
            if a != b {
                system[(b, a)] += v;
            }
        }
    }
    let chol = Cholesky::new(&system).map_err(|_| Error::SingularSystem("ensemble-space Kalman gain"))?;
    members
        .iter()
        .zip(residuals)
        .map(|(u, r)| {
            let rhs: Vec<f64> = weighted.iter().map(|wp| dot(wp, r)).collect();
            let x = chol.solve(&rhs);
            let mut coeffs = u.coeffs().to_vec();
            for (col, xk) in centered_u.iter().zip(&x) {
                axpy(inv_j * xk, col, &mut coeffs);
            }
            SpectralField::new(*u.spec(), coeffs)
        })
        .collect()
}

/// One EKI step:
/// `u ← u + C^up (C^pp + Γ)^(-1) (y + ξ − G(u))`, `ξ ~ N(0, Γ')`.
pub fn eki_step<G: GaussianSource + ?Sized>(
    e: &Ensemble,
    p: &InverseProblem,
    perturb: Perturbation,
    rng: &mut G,
) -> Result<Ensemble> {
    let evals = e.forward_or_eval(p.model().as_ref())?;
    let st = stats(&e.members, &evals)?;
    let m = p.obs_dim();
    let residuals: Vec<Vec<f64>> = evals
        .iter()
        .map(|g| {
            let xi = match perturb {
                Perturbation::None => None,
                Perturbation::Full => Some(p.noise().sample(m, rng)),
            };
            (0..m)
                .map(|i| p.data()[i] + xi.as_ref().map_or(0.0, |x| x[i]) - g[i])
                .collect()
        })
        .collect();
    let precisions = p.noise().precisions(m);
    let members = kalman_update(&e.members, &st.centered_u, &st.centered_g, &precisions, &residuals)?;
    Ensemble::new(members)
}

/// One TEKI step: EKI applied to `z = (y, 0)`, `F(u) = (G(u), u)`,
/// `Σ = diag(Γ, λ^(-1) C₀)`.
pub fn teki_step<G: GaussianSource + ?Sized>(
    e: &Ensemble,
    p: &InverseProblem,
    perturb: Perturbation,
    rng: &mut G,
) -> Result<Ensemble> {
    let evals = e.forward_or_eval(p.model().as_ref())?;
    let aug = p.augment();
    let stacked: Vec<Vec<f64>> = evals.iter().zip(&e.members).map(|(g, u)| aug.stack(g, u)).collect();
    let (_, centered_f) = mean_and_centered(&stacked);
    let coeffs: Vec<&[f64]> = e.members.iter().map(|u| u.coeffs()).collect();
    let (_, centered_u) = mean_and_centered(&coeffs);
    let precisions = aug.precisions();
    let z = aug.z();
    let m = p.obs_dim();
    let prior_sd: Vec<f64> = p.prior_precisions().iter().map(|w| 1.0 / libm::sqrt(*w)).collect();
    let residuals: Vec<Vec<f64>> = stacked
        .iter()
        .map(|f| {
            let mut r: Vec<f64> = z.iter().zip(f).map(|(a, b)| a - b).collect();
            if perturb == Perturbation::Full {
                let xi = p.noise().sample(m, rng);
                axpy(1.0, &xi, &mut r[..m]);
                for (ri, sd) in r[m..].iter_mut().zip(&prior_sd) {
                    *ri += sd * rng.next_gaussian();
                }
            }
            r
        })
        .collect();
    let members = kalman_update(&e.members, &centered_u, &centered_f, &precisions, &residuals)?;
    Ensemble::new(members)
}

/// Largest relative distance of a member from the span of `basis`
/// (X-orthonormal columns in spectral coordinates).
pub fn subspace_residual(e: &Ensemble, basis: &[Vec<f64>]) -> f64 {
    e.members
        .iter()
        .map(|u| {
            let c = u.coeffs();
            let total = norm(c);
            if total == 0.0 {
                return 0.0;
            }
            let proj = project(basis, c);
            let off: Vec<f64> = c.iter().zip(&proj).map(|(a, b)| a - b).collect();
            norm(&off) / total
        })
        .fold(0.0, f64::max)
}
