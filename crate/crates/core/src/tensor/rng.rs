use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seeded random stream.
///
/// The generator is ChaCha8 (`rand_chacha`) seeded through
/// `SeedableRng::seed_from_u64`, which is specified bit-for-bit and therefore
/// yields identical streams on every platform. Independent sub-streams are
/// obtained with [`RngState::derive`], so work items can draw randomness
/// without depending on scheduling order.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub const ALGORITHM: &'static str = "chacha8/seed_from_u64";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream keyed by `seed` and a path of stream identifiers, e.g.
    /// `(seed, [epoch, item])`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut s = splitmix64(seed);
        for &p in path {
            s = splitmix64(s ^ splitmix64(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        }
        Self {
            seed: s,
            rng: ChaCha8Rng::seed_from_u64(s),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
