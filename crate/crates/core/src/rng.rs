//! Seeded random streams.
//!
//! Every random quantity in a run (truth, noise, initial ensemble, source
//! locations, perturbed observations) is drawn from its own ChaCha stream
//! whose seed is derived from the master seed and a fixed label. Changing
//! how many draws one stream consumes never shifts another stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

/// Source of independent standard normal variates.
///
/// Blanket-implemented for every [`Rng`]; tests implement it directly to
/// force specific values.
pub trait GaussianSource {
    fn next_gaussian(&mut self) -> f64;
}

impl<R: Rng + ?Sized> GaussianSource for R {
    fn next_gaussian(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

/// Stream for `label` under `master`.
pub fn stream(master: u64, label: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

/// SplitMix64 finalizer over the master seed xor the FNV-1a hash of the label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (master ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
