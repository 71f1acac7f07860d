//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream id)`. The seed is
//! expanded with `SeedableRng::seed_from_u64` and the stream id selects the
//! ChaCha stream counter, so sub-streams never overlap and the sequence is the
//! same on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids so that unrelated consumers never share draws.
pub mod streams {
    pub const SKILLS: u64 = 1;
    pub const HIGH_POLICY: u64 = 2;
    pub const MID_POLICY: u64 = 3;
    pub const INITIAL_STATE: u64 = 4;
    pub const CHECKS: u64 = 5;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Independent child stream. Children of the same parent with different
    /// ids never overlap; the parent's position is not consumed.
    pub fn split(&self, id: u64) -> Self {
        let child = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id.wrapping_add(1));
        Self::with_stream(self.seed, child)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(7);
        let mut b = RngStream::new(7);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn split_streams_differ() {
        let root = RngStream::new(7);
        let mut a = root.split(1);
        let mut b = root.split(2);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn uniform_in_range() {
        let mut r = RngStream::new(3);
        for _ in 0..1000 {
            let x = r.uniform_in(-2.0, 5.0);
            assert!((-2.0..5.0).contains(&x));
        }
    }
}
