//! Keyed Brownian-increment streams.
//!
//! A stream is identified by `(seed, replica, particle)`; draws inside it are
//! consumed in `(step, component)` order. Each work unit owns its stream, so
//! trajectories are bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of one noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replica: u64,
    pub particle: u64,
}

impl StreamKey {
    pub fn new(seed: u64, replica: u64, particle: u64) -> Self {
        Self { seed, replica, particle }
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut h = splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        h = splitmix64(h ^ self.replica.wrapping_mul(0x2545_f491_4f6c_dd1d));
        h = splitmix64(h ^ self.particle.wrapping_mul(0x9e6c_63d0_676a_9a99));
        let mut out = [0u8; 32];
        for (k, chunk) in out.chunks_mut(8).enumerate() {
            h = splitmix64(h.wrapping_add(k as u64));
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        out
    }
}

/// Sequentially consumed normal/uniform stream for one key.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(key: StreamKey) -> Self {
        Self {
            rng: ChaCha8Rng::from_seed(key.seed_bytes()),
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Fill `out` with independent N(0, h) increments, `sqrt_h = h.sqrt()`.
    #[inline]
    pub fn increments(&mut self, sqrt_h: f64, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = sqrt_h * self.normal();
        }
    }
}
