//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit [`TrialRng`]. The generator is
//! ChaCha8 seeded from a 64-bit seed; independent streams of the same seed are
//! obtained with [`TrialRng::stream`], so a trial can hand one stream to the
//! environment and another to the agent without the two interleaving.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name and version of the generator, recorded in serialized artifacts.
pub const RNG_ALGORITHM: &str = "chacha8-v1";

/// Stream used for initial-state and next-state sampling.
pub const ENV_STREAM: u64 = 0;
/// Stream used by agents (random actions, random restarts).
pub const AGENT_STREAM: u64 = 1;

#[derive(Clone, Debug)]
pub struct TrialRng {
    inner: ChaCha8Rng,
}

impl TrialRng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Inverse-CDF sample over `probs` in index order.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left `acc` slightly below 1; fall back to the last positive entry
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
    }

    /// Uniform point on the probability simplex (flat Dirichlet).
    pub fn simplex_point(&mut self, dim: usize) -> Vec<f64> {
        let mut w: Vec<f64> = (0..dim).map(|_| -(1.0 - self.uniform()).ln()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }
}

impl RngCore for TrialRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
