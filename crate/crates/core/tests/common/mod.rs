#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use teki_core::field::{sample_prior, CovarianceSpec, SpectralField};
use teki_core::linalg::Matrix;
use teki_core::rng::{stream, GaussianSource, Stream};
use teki_core::toy::LinearModel;
use teki_core::{Ensemble, InverseProblem, NoiseSpec, ObsVector};

pub fn rng(seed: u64) -> Stream {
    stream(seed, "tests")
}

/// Spec with `λ_(0,0) = 1`.
pub fn unit_spec() -> CovarianceSpec {
    CovarianceSpec::new(2.0, 1.0, 1).unwrap()
}

/// Field with only the constant mode set.
pub fn scalar(spec: CovarianceSpec, c: f64) -> SpectralField {
    let mut coeffs = vec![0.0; spec.modes()];
    coeffs[0] = c;
    SpectralField::new(spec, coeffs).unwrap()
}

/// `G(u) = c_(0,0)`, `Γ = 1`, `λ = 1`, `C₀ = 1` on the constant mode.
pub fn scalar_problem(y: f64) -> InverseProblem {
    let spec = unit_spec();
    let mut a = Matrix::zeros(1, spec.modes());
    a[(0, 0)] = 1.0;
    InverseProblem::new(
        Arc::new(LinearModel::new(a)),
        ObsVector::new(vec![y]).unwrap(),
        NoiseSpec::isotropic(1.0).unwrap(),
        spec,
        1.0,
    )
    .unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Stream) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
    Matrix::from_row_major(rows, cols, data).unwrap()
}

/// Random linear problem with a diagonal noise covariance.
pub fn random_linear(spec: CovarianceSpec, obs: usize, rng: &mut Stream) -> InverseProblem {
    let a = random_matrix(obs, spec.modes(), rng);
    let variances = (0..obs).map(|_| rng.random_range(0.5..2.0)).collect();
    let y = (0..obs).map(|_| rng.next_gaussian()).collect();
    let lambda = rng.random_range(0.5..2.0);
    InverseProblem::new(
        Arc::new(LinearModel::new(a)),
        ObsVector::new(y).unwrap(),
        NoiseSpec::diagonal(variances).unwrap(),
        spec,
        lambda,
    )
    .unwrap()
}

/// `j` members with independent standard normal coefficients.
pub fn random_ensemble(spec: CovarianceSpec, j: usize, rng: &mut Stream) -> Ensemble {
    let members = (0..j)
        .map(|_| SpectralField::new(spec, (0..spec.modes()).map(|_| rng.next_gaussian()).collect()).unwrap())
        .collect();
    Ensemble::new(members).unwrap()
}

pub fn prior_ensemble(spec: CovarianceSpec, j: usize, rng: &mut Stream) -> Ensemble {
    Ensemble::new((0..j).map(|_| sample_prior(&spec, rng)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
