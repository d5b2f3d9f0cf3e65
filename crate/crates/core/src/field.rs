//! Gaussian random fields on the unit square.
//!
//! Fields are stored by their coefficients in the orthonormal Neumann
//! cosine basis
//!
//! ```text
//! φ_(k1,k2)(x) = c_k1 c_k2 cos(k1 π x1) cos(k2 π x2),   c_0 = 1, c_j = √2,
//! ```
//!
//! which diagonalizes the covariance `C₀ = (−Δ + τ²)^(−α)` with eigenvalues
//! `λ_k = (|k|² π² + τ²)^(−α)`. Modes are truncated to `0 ≤ k1, k2 ≤ kmax`
//! and stored lexicographically: flat index `k1 (kmax + 1) + k2`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::rng::GaussianSource;

/// Parameters of the prior covariance `(−Δ + τ²)^(−α)` and its truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    alpha: f64,
    tau: f64,
    kmax: usize,
}

impl CovarianceSpec {
    pub const DEFAULT_KMAX: usize = 32;

    pub fn new(alpha: f64, tau: f64, kmax: usize) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidSpec("alpha must exceed 1"));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidSpec("tau must be positive"));
        }
        if kmax < 1 {
            return Err(Error::InvalidSpec("kmax must be at least 1"));
        }
        Ok(CovarianceSpec { alpha, tau, kmax })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// Same truncation and length scale, different regularity.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        CovarianceSpec::new(alpha, self.tau, self.kmax)
    }

    /// Number of retained modes, `(kmax + 1)²`.
    pub fn modes(&self) -> usize {
        (self.kmax + 1) * (self.kmax + 1)
    }

    pub fn mode_index(&self, k1: usize, k2: usize) -> Result<usize> {
        if k1 > self.kmax || k2 > self.kmax {
            return Err(Error::ModeOutOfRange { k1, k2, kmax: self.kmax });
        }
        Ok(k1 * (self.kmax + 1) + k2)
    }

    pub fn mode_at(&self, index: usize) -> (usize, usize) {
        (index / (self.kmax + 1), index % (self.kmax + 1))
    }

    /// `λ_k = (|k|² π² + τ²)^(−α)`.
    pub fn eigenvalue(&self, k1: usize, k2: usize) -> Result<f64> {
        self.mode_index(k1, k2)?;
        Ok(self.eigenvalue_unchecked(k1, k2))
    }

    fn eigenvalue_unchecked(&self, k1: usize, k2: usize) -> f64 {
        let k_sq = (k1 * k1 + k2 * k2) as f64;
        libm::pow(k_sq * PI * PI + self.tau * self.tau, -self.alpha)
    }

    /// All eigenvalues in flat mode order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.modes())
            .map(|idx| {
                let (k1, k2) = self.mode_at(idx);
                self.eigenvalue_unchecked(k1, k2)
            })
            .collect()
    }

    /// Smallest Cameron–Martin exponent `a` for which draws `Σ λ_k^a ξ_k φ_k`
    /// have finite expected K-norm: `a > 1/2 + 1/(2α)`.
    pub fn cm_threshold(&self) -> f64 {
        0.5 + 0.5 / self.alpha
    }

    /// Flat mode indices sorted by descending eigenvalue, ties broken
    /// lexicographically in `(k1, k2)`.
    pub fn modes_by_variance(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.modes()).collect();
        idx.sort_by_key(|&i| {
            let (k1, k2) = self.mode_at(i);
            (k1 * k1 + k2 * k2, k1, k2)
        });
        idx
    }
}

/// A field `u = Σ_k c_k φ_k` given by its spectral coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: CovarianceSpec,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(spec: CovarianceSpec, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != spec.modes() {
            return Err(Error::DimensionMismatch { expected: spec.modes(), got: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(SpectralField { spec, coeffs })
    }

    pub fn zeros(spec: CovarianceSpec) -> Self {
        SpectralField { spec, coeffs: vec![0.0; spec.modes()] }
    }

    /// The single eigenfunction `φ_(k1,k2)`.
    pub fn mode(spec: CovarianceSpec, k1: usize, k2: usize) -> Result<Self> {
        let idx = spec.mode_index(k1, k2)?;
        let mut f = SpectralField::zeros(spec);
        f.coeffs[idx] = 1.0;
        Ok(f)
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn coeff(&self, k1: usize, k2: usize) -> Result<f64> {
        Ok(self.coeffs[self.spec.mode_index(k1, k2)?])
    }

    /// Same coefficients read against another spec with the same truncation.
    pub fn rebase(&self, spec: CovarianceSpec) -> Result<Self> {
        if spec.kmax != self.spec.kmax {
            return Err(Error::IncompatibleSpecs);
        }
        Ok(SpectralField { spec, coeffs: self.coeffs.clone() })
    }

    pub fn ensure_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.spec == other.spec {
            Ok(())
        } else {
            Err(Error::IncompatibleSpecs)
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.ensure_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(SpectralField { spec: self.spec, coeffs })
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.ensure_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(SpectralField { spec: self.spec, coeffs })
    }

    pub fn scale(&self, factor: f64) -> SpectralField {
        SpectralField { spec: self.spec, coeffs: self.coeffs.iter().map(|c| c * factor).collect() }
    }

    /// `C₀^(-1/2) u` truncated: coefficients scaled by `λ_k^(-1/2)`.
    pub fn whiten(&self) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.spec.eigenvalues())
            .map(|(c, lam)| c / libm::sqrt(lam))
            .collect();
        SpectralField { spec: self.spec, coeffs }
    }

    /// Arithmetic mean; fails on an empty slice or mixed specs.
    pub fn mean(fields: &[SpectralField]) -> Result<SpectralField> {
        let first = fields.first().ok_or(Error::EnsembleTooSmall(0))?;
        let mut acc = vec![0.0; first.coeffs.len()];
        for f in fields {
            first.ensure_compatible(f)?;
            crate::linalg::axpy(1.0, &f.coeffs, &mut acc);
        }
        let inv = 1.0 / fields.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        Ok(SpectralField { spec: first.spec, coeffs: acc })
    }
}

/// One draw from `N(0, C₀)` by the truncated Karhunen–Loève expansion,
/// `c_k = √λ_k ξ_k` with `ξ_k` consumed in flat mode order.
pub fn sample_prior<G: GaussianSource + ?Sized>(spec: &CovarianceSpec, rng: &mut G) -> SpectralField {
    draw(spec, 0.5, rng)
}

/// One draw of `Σ_k λ_k^a ξ_k φ_k`. For `a > 1/2 + 1/(2α)` the draws lie in
/// the Cameron–Martin space of the prior; smaller exponents only log a
/// warning because any finite truncation is well defined.
pub fn sample_cm<G: GaussianSource + ?Sized>(spec: &CovarianceSpec, a: f64, rng: &mut G) -> SpectralField {
    if a <= spec.cm_threshold() {
        log::warn!(
            "exponent a = {a} does not exceed 1/2 + 1/(2 alpha) = {}; draws leave the Cameron-Martin space as kmax grows",
            spec.cm_threshold()
        );
    }
    draw(spec, a, rng)
}

fn draw<G: GaussianSource + ?Sized>(spec: &CovarianceSpec, a: f64, rng: &mut G) -> SpectralField {
    let coeffs = spec
        .eigenvalues()
        .into_iter()
        .map(|lam| {
            let amp = if a == 0.5 { libm::sqrt(lam) } else { libm::pow(lam, a) };
            amp * rng.next_gaussian()
        })
        .collect();
    SpectralField { spec: *spec, coeffs }
}

/// Nodal values on the uniform `(n+1) × (n+1)` grid `x = (i/n, j/n)`,
/// stored row-major with `x1` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs n >= 1".into()));
        }
        let expected = (n + 1) * (n + 1);
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        Ok(GridField { n, values })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        assert!(n >= 1, "grid needs n >= 1");
        GridField { n, values: vec![value; (n + 1) * (n + 1)] }
    }

    /// Samples `f(x1, x2)` at every node.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(n >= 1, "grid needs n >= 1");
        let h = 1.0 / n as f64;
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        GridField { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Flat index of node `(i, j)`, `i` along `x1`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { n: self.n, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// L² norm by the 2-D trapezoidal rule.
    pub fn l2_norm(&self) -> f64 {
        let w = trapezoid_weights(self.n);
        let mut acc = 0.0;
        for j in 0..=self.n {
            for i in 0..=self.n {
                let v = self.at(i, j);
                acc += w[i] * w[j] * v * v;
            }
        }
        libm::sqrt(acc)
    }

    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: other.n });
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

fn trapezoid_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut w = vec![h; n + 1];
    w[0] = 0.5 * h;
    w[n] = 0.5 * h;
    w
}

/// `table[k][i] = c_k cos(k π i / n)` for `k ≤ kmax`, `i ≤ n`.
fn cosine_table(kmax: usize, n: usize) -> Vec<Vec<f64>> {
    (0..=kmax)
        .map(|k| {
            let c = if k == 0 { 1.0 } else { SQRT_2 };
            (0..=n)
                .map(|i| {
                    // reduce the phase exactly before calling cos
                    let m = (k * i) % (2 * n);
                    c * libm::cos(PI * m as f64 / n as f64)
                })
                .collect()
        })
        .collect()
}

/// Evaluates `u` at every node of the `(n+1)²` grid. Separable: the cost is
/// `O(kmax² n + kmax n²)`.
pub fn synthesize(u: &SpectralField, n: usize) -> GridField {
    assert!(n >= 1, "grid needs n >= 1");
    let kmax = u.spec.kmax;
    let table = cosine_table(kmax, n);
    // partial[k1][j] = Σ_k2 c_(k1,k2) φ_k2(x2_j)
    let mut partial = vec![vec![0.0; n + 1]; kmax + 1];
    for (k1, row) in partial.iter_mut().enumerate() {
        for k2 in 0..=kmax {
            let c = u.coeffs[k1 * (kmax + 1) + k2];
            if c != 0.0 {
                crate::linalg::axpy(c, &table[k2], row);
            }
        }
    }
    let mut values = vec![0.0; (n + 1) * (n + 1)];
    for j in 0..=n {
        let dst = &mut values[j * (n + 1)..(j + 1) * (n + 1)];
        for k1 in 0..=kmax {
            let p = partial[k1][j];
            if p != 0.0 {
                crate::linalg::axpy(p, &table[k1], dst);
            }
        }
    }
    GridField { n, values }
}

/// Projects nodal values onto the truncated basis by trapezoidal quadrature.
/// Exact for grids of cosine modes once `n ≥ 2 kmax`.
pub fn analyze(g: &GridField, spec: &CovarianceSpec) -> Result<SpectralField> {
    let n = g.n;
    let kmax = spec.kmax;
    if n < 2 * kmax {
        return Err(Error::UnderResolved { n, kmax });
    }
    let table = cosine_table(kmax, n);
    let w = trapezoid_weights(n);
    // row_proj[k1][j] = Σ_i w_i g_ij φ_k1(x1_i)
    let mut row_proj = vec![vec![0.0; n + 1]; kmax + 1];
    for j in 0..=n {
        let row = &g.values[j * (n + 1)..(j + 1) * (n + 1)];
        for (k1, dst) in row_proj.iter_mut().enumerate() {
            dst[j] = row.iter().zip(&w).zip(&table[k1]).map(|((v, wi), t)| v * wi * t).sum();
        }
    }
    let mut coeffs = vec![0.0; spec.modes()];
    for k1 in 0..=kmax {
        for k2 in 0..=kmax {
            coeffs[k1 * (kmax + 1) + k2] =
                row_proj[k1].iter().zip(&w).zip(&table[k2]).map(|((v, wj), t)| v * wj * t).sum();
        }
    }
    SpectralField::new(*spec, coeffs)
}

/// `⟨u, v⟩_X = Σ_k u_k v_k` (Parseval in the orthonormal basis).
pub fn inner_x(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    u.ensure_compatible(v)?;
    Ok(crate::linalg::dot(&u.coeffs, &v.coeffs))
}

/// `⟨u, v⟩_K = Σ_k λ_k^(-1) u_k v_k`, the Cameron–Martin inner product.
pub fn inner_k(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    u.ensure_compatible(v)?;
    Ok(inner_k_coeffs(&u.spec, &u.coeffs, &v.coeffs))
}

pub(crate) fn inner_k_coeffs(spec: &CovarianceSpec, u: &[f64], v: &[f64]) -> f64 {
    spec.eigenvalues().iter().zip(u).zip(v).map(|((lam, a), b)| a * b / lam).sum()
}

pub fn norm_x(u: &SpectralField) -> f64 {
    crate::linalg::norm(&u.coeffs)
}

pub fn norm_k(u: &SpectralField) -> f64 {
    libm::sqrt(inner_k_coeffs(&u.spec, &u.coeffs, &u.coeffs))
}
