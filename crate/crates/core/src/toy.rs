//! Finite-dimensional forward models acting directly on spectral coefficients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{CovarianceSpec, SpectralField};
use crate::linalg::Matrix;
use crate::models::Point;
use crate::problem::{ForwardModel, ObsVector};

/// `G(u) = A c` for the coefficient vector `c` of `u`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    matrix: Matrix,
}

impl LinearModel {
    pub fn new(matrix: Matrix) -> Self {
        LinearModel { matrix }
    }

    /// Point evaluation `u(x_i)` at each observation point.
    pub fn pointwise(spec: &CovarianceSpec, points: &[Point]) -> Self {
        let modes = spec.modes();
        let mut matrix = Matrix::zeros(points.len(), modes);
        for (i, p) in points.iter().enumerate() {
            for idx in 0..modes {
                let (k1, k2) = spec.mode_at(idx);
                matrix[(i, idx)] = basis_1d(k1, p.x1) * basis_1d(k2, p.x2);
            }
        }
        LinearModel { matrix }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

fn basis_1d(k: usize, x: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        core::f64::consts::SQRT_2 * libm::cos(k as f64 * core::f64::consts::PI * x)
    }
}

fn check_modes(matrix: &Matrix, u: &SpectralField) -> Result<()> {
    if matrix.cols() != u.coeffs().len() {
        return Err(Error::DimensionMismatch { expected: matrix.cols(), got: u.coeffs().len() });
    }
    Ok(())
}

impl ForwardModel for LinearModel {
    fn obs_dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, u: &SpectralField) -> Result<ObsVector> {
        check_modes(&self.matrix, u)?;
        ObsVector::new(self.matrix.mul_vec(u.coeffs()))
    }

    fn linear_operator(&self) -> Option<&Matrix> {
        Some(&self.matrix)
    }
}

/// `G_i(u) = (A c)_i + ((B c)_i)²`.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    linear: Matrix,
    quadratic: Matrix,
}

impl QuadraticModel {
    pub fn new(linear: Matrix, quadratic: Matrix) -> Result<Self> {
        if linear.rows() != quadratic.rows() || linear.cols() != quadratic.cols() {
            return Err(Error::DimensionMismatch { expected: linear.rows(), got: quadratic.rows() });
        }
        Ok(QuadraticModel { linear, quadratic })
    }
}

impl ForwardModel for QuadraticModel {
    fn obs_dim(&self) -> usize {
        self.linear.rows()
    }

    fn apply(&self, u: &SpectralField) -> Result<ObsVector> {
        check_modes(&self.linear, u)?;
        let a = self.linear.mul_vec(u.coeffs());
        let b = self.quadratic.mul_vec(u.coeffs());
        ObsVector::new(a.iter().zip(&b).map(|(x, y)| x + y * y).collect::<Vec<_>>())
    }
}
