//! Per-path random streams.
//!
//! Every path owns an independent ChaCha8 stream selected by its index, so a
//! path's normals depend only on `(master_seed, path_index)` and never on the
//! thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(path_index);
        Self { inner }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// The two standard normals consumed by one simulation step.
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let a = self.normal();
        let b = self.normal();
        (a, b)
    }
}

/// Derives a child seed, e.g. for repetitions inside a study.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(tag.wrapping_add(1 << 63));
    rng.random()
}
