//! Inverse problems `y = G(u) + η` and their Tikhonov augmentation.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};
use crate::field::{inner_k, CovarianceSpec, SpectralField};
use crate::linalg::Matrix;
use crate::rng::GaussianSource;

/// Observation-space vector (data, model output, noise).
#[derive(Debug, Clone, PartialEq)]
pub struct ObsVector(Vec<f64>);

impl ObsVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation vector"));
        }
        Ok(ObsVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ObsVector(alloc::vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ObsVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ObsVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A deterministic map from fields to observations.
///
/// Implementations must be safe to call concurrently.
pub trait ForwardModel: Send + Sync {
    fn obs_dim(&self) -> usize;

    fn apply(&self, u: &SpectralField) -> Result<ObsVector>;

    /// Evaluates every member, index-aligned. Sequential by default; wrappers
    /// may override this to fan the evaluations out.
    fn apply_all(&self, members: &[SpectralField]) -> Result<Vec<ObsVector>> {
        members.iter().map(|u| self.apply(u)).collect()
    }

    /// Matrix of the map on spectral coefficients when the model is linear.
    fn linear_operator(&self) -> Option<&Matrix> {
        None
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for Arc<M> {
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn apply(&self, u: &SpectralField) -> Result<ObsVector> {
        (**self).apply(u)
    }
    fn apply_all(&self, members: &[SpectralField]) -> Result<Vec<ObsVector>> {
        (**self).apply_all(members)
    }
    fn linear_operator(&self) -> Option<&Matrix> {
        (**self).linear_operator()
    }
}

/// Diagonal observation noise covariance Γ.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// `Γ = γ² I`.
    Isotropic { gamma: f64 },
    /// Diagonal of Γ (variances).
    Diagonal(Vec<f64>),
}

impl NoiseSpec {
    pub fn isotropic(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument("noise scale must be positive".into()));
        }
        Ok(NoiseSpec::Isotropic { gamma })
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("noise variances must be positive".into()));
        }
        Ok(NoiseSpec::Diagonal(variances))
    }

    /// `Γ_ii`.
    pub fn variance(&self, i: usize) -> f64 {
        match self {
            NoiseSpec::Isotropic { gamma } => gamma * gamma,
            NoiseSpec::Diagonal(v) => v[i],
        }
    }

    /// `Γ^(-1)` diagonal for an observation space of dimension `dim`.
    pub fn precisions(&self, dim: usize) -> Vec<f64> {
        (0..dim).map(|i| 1.0 / self.variance(i)).collect()
    }

    /// `‖Γ^(-1/2) r‖²`.
    pub fn weighted_norm_sq(&self, r: &[f64]) -> f64 {
        r.iter().enumerate().map(|(i, v)| v * v / self.variance(i)).sum()
    }

    /// One draw from `N(0, Γ)`.
    pub fn sample<G: GaussianSource + ?Sized>(&self, dim: usize, rng: &mut G) -> ObsVector {
        ObsVector((0..dim).map(|i| libm::sqrt(self.variance(i)) * rng.next_gaussian()).collect())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            NoiseSpec::Diagonal(v) if v.len() != dim => {
                Err(Error::DimensionMismatch { expected: dim, got: v.len() })
            }
            _ => Ok(()),
        }
    }
}

/// Forward model, data, noise, prior and regularization weight λ.
///
/// The regularization weight is carried as a factor on the Cameron–Martin
/// term; every internal formula uses the folded prior `λ^(-1) C₀`.
#[derive(Clone)]
pub struct InverseProblem {
    model: Arc<dyn ForwardModel>,
    y: ObsVector,
    noise: NoiseSpec,
    prior: CovarianceSpec,
    lambda: f64,
}

impl core::fmt::Debug for InverseProblem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("InverseProblem")
            .field("obs_dim", &self.y.len())
            .field("noise", &self.noise)
            .field("prior", &self.prior)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl InverseProblem {
    pub fn new(
        model: Arc<dyn ForwardModel>,
        y: ObsVector,
        noise: NoiseSpec,
        prior: CovarianceSpec,
        lambda: f64,
    ) -> Result<Self> {
        if y.len() != model.obs_dim() {
            return Err(Error::DimensionMismatch { expected: model.obs_dim(), got: y.len() });
        }
        noise.check_dim(y.len())?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument("regularization weight must be positive".into()));
        }
        Ok(InverseProblem { model, y, noise, prior, lambda })
    }

    pub fn model(&self) -> &Arc<dyn ForwardModel> {
        &self.model
    }

    pub fn data(&self) -> &ObsVector {
        &self.y
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn prior(&self) -> &CovarianceSpec {
        &self.prior
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn obs_dim(&self) -> usize {
        self.y.len()
    }

    /// Same problem with the noise covariance replaced.
    pub fn with_noise(&self, noise: NoiseSpec) -> Result<Self> {
        InverseProblem::new(self.model.clone(), self.y.clone(), noise, self.prior, self.lambda)
    }

    /// Same problem with other data.
    pub fn with_data(&self, y: ObsVector) -> Result<Self> {
        InverseProblem::new(self.model.clone(), y, self.noise.clone(), self.prior, self.lambda)
    }

    /// Same problem with another regularization weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        InverseProblem::new(self.model.clone(), self.y.clone(), self.noise.clone(), self.prior, lambda)
    }

    /// Per-mode precision of the folded prior, `λ / λ_k`.
    pub fn prior_precisions(&self) -> Vec<f64> {
        self.prior.eigenvalues().into_iter().map(|lam| self.lambda / lam).collect()
    }

    /// `½‖Γ^(-1/2)(g − y)‖²` for an already evaluated `g = G(u)`.
    pub fn misfit_of(&self, g: &[f64]) -> f64 {
        let r: Vec<f64> = g.iter().zip(self.y.iter()).map(|(a, b)| a - b).collect();
        0.5 * self.noise.weighted_norm_sq(&r)
    }

    /// `½‖Γ^(-1/2)(G(u) − y)‖²`.
    pub fn misfit(&self, u: &SpectralField) -> Result<f64> {
        let g = self.model.apply(u)?;
        Ok(self.misfit_of(&g))
    }

    /// `‖Γ^(-1/2)(y − g)‖`, the data misfit reported alongside the noise level.
    pub fn misfit_norm_of(&self, g: &[f64]) -> f64 {
        libm::sqrt(2.0 * self.misfit_of(g))
    }

    /// `(λ/2)‖u‖²_K`.
    pub fn regularization(&self, u: &SpectralField) -> Result<f64> {
        let u = self.in_prior(u)?;
        Ok(0.5 * self.lambda * inner_k(&u, &u)?)
    }

    /// `½‖Γ^(-1/2)(G(u) − y)‖² + (λ/2)‖u‖²_K`.
    pub fn tikhonov_loss(&self, u: &SpectralField) -> Result<f64> {
        Ok(self.misfit(u)? + self.regularization(u)?)
    }

    /// Loss when `G(u)` is already known.
    pub fn tikhonov_loss_of(&self, u: &SpectralField, g: &[f64]) -> Result<f64> {
        Ok(self.misfit_of(g) + self.regularization(u)?)
    }

    /// `‖Γ^(-1/2) η‖`, the benchmark the data misfit is compared against.
    pub fn noise_level(&self, eta: &[f64]) -> f64 {
        libm::sqrt(self.noise.weighted_norm_sq(eta))
    }

    /// The augmented problem `z = F(u) + η`, `F(u) = (G(u), u)`.
    pub fn augment(&self) -> AugmentedProblem<'_> {
        AugmentedProblem { problem: self, prior_precisions: self.prior_precisions() }
    }

    fn in_prior(&self, u: &SpectralField) -> Result<SpectralField> {
        if u.spec() == &self.prior {
            Ok(u.clone())
        } else {
            Err(Error::IncompatibleSpecs)
        }
    }
}

/// `z = (y, 0)`, `F(u) = (G(u), u)`, `Σ = diag(Γ, λ^(-1) C₀)`.
///
/// The `u` block is carried in spectral coordinates, where the folded prior
/// is diagonal.
#[derive(Debug)]
pub struct AugmentedProblem<'a> {
    problem: &'a InverseProblem,
    prior_precisions: Vec<f64>,
}

impl AugmentedProblem<'_> {
    /// `M + K`.
    pub fn dim(&self) -> usize {
        self.problem.obs_dim() + self.problem.prior.modes()
    }

    pub fn z(&self) -> Vec<f64> {
        let mut z = self.problem.y.to_vec();
        z.resize(self.dim(), 0.0);
        z
    }

    /// `F(u)` given a precomputed `G(u)`.
    pub fn stack(&self, g: &[f64], u: &SpectralField) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(g);
        out.extend_from_slice(u.coeffs());
        out
    }

    pub fn evaluate(&self, u: &SpectralField) -> Result<Vec<f64>> {
        let g = self.problem.model.apply(u)?;
        Ok(self.stack(&g, u))
    }

    /// Diagonal of `Σ^(-1)`.
    pub fn precisions(&self) -> Vec<f64> {
        let mut w = self.problem.noise.precisions(self.problem.obs_dim());
        w.extend_from_slice(&self.prior_precisions);
        w
    }

    /// `½‖Σ^(-1/2)(z − F(u))‖²`.
    pub fn half_weighted_residual_sq(&self, f_u: &[f64]) -> f64 {
        let z = self.z();
        0.5 * self
            .precisions()
            .iter()
            .zip(z.iter().zip(f_u))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
    }
}

/// `y = G(u†) + η` with `η ~ N(0, Γ)`; returns `(y, η)`.
pub fn synthesize_data<G: GaussianSource + ?Sized>(
    model: &dyn ForwardModel,
    truth: &SpectralField,
    noise: &NoiseSpec,
    rng: &mut G,
) -> Result<(ObsVector, ObsVector)> {
    let clean = model.apply(truth)?;
    let eta = noise.sample(clean.len(), rng);
    let y = clean.iter().zip(eta.iter()).map(|(a, b)| a + b).collect();
    Ok((ObsVector::new(y)?, eta))
}
