//! Thread-parallel batch evaluation for expensive forward models.

use std::sync::Arc;

use rayon::prelude::*;
use teki_core::field::SpectralField;
use teki_core::linalg::Matrix;
use teki_core::{ForwardModel, ObsVector};

/// Evaluates batches member-by-member on the rayon pool. Results come back
/// in input order, so runs stay bit-identical for any thread count.
#[derive(Clone)]
pub struct Parallel(pub Arc<dyn ForwardModel>);

impl ForwardModel for Parallel {
    fn obs_dim(&self) -> usize {
        self.0.obs_dim()
    }

    fn apply(&self, u: &SpectralField) -> teki_core::Result<ObsVector> {
        self.0.apply(u)
    }

    fn apply_all(&self, members: &[SpectralField]) -> teki_core::Result<Vec<ObsVector>> {
        members.par_iter().map(|u| self.0.apply(u)).collect()
    }

    fn linear_operator(&self) -> Option<&Matrix> {
        self.0.linear_operator()
    }
}
