//! Hierarchical random streams.
//!
//! A master seed keys a ChaCha12 generator; each `(replication, index)` pair
//! selects its own 64-bit ChaCha stream. Two substreams never share output,
//! and the draws of one substream do not depend on which other substreams
//! were consumed before it, so results are independent of scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// A random stream handle. Cheap to create; owns its generator state.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha12Rng,
}

impl Stream {
    /// The root stream of `seed` (replication 0, index 0).
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0, 0)
    }

    /// The substream for replication `replication`, item `index`.
    pub fn substream(seed: u64, replication: u32, index: u32) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream((u64::from(replication) << 32) | u64::from(index));
        Stream { rng }
    }

    /// Uniform draw on (0, 1].
    pub fn uniform_open0(&mut self) -> f64 {
        // random::<f64>() is on [0, 1); reflect it.
        1.0 - self.rng.random::<f64>()
    }

    /// Unit-mean exponential draw by inverse transform.
    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open0().ln()
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
