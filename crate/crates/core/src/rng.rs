//! Counter-based uniform streams.
//!
//! Every random quantity in the crate is addressed by `(seed, stream, offset)`
//! so that a replicate, a matched set inside it, and a unit inside that set
//! always read the same uniforms regardless of scheduling. This gives common
//! random numbers across methods and reproducible parallel runs.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A ChaCha8 keystream positioned at a fixed 64-bit word offset.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    /// Stream `stream` of generator `seed`, starting at 64-bit draw `offset`.
    pub fn new(seed: u64, stream: u64, offset: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        // Word positions count 32-bit words.
        inner.set_word_pos(u128::from(offset) * 2);
        Stream { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift; bias below 2⁻³²
    /// for the small `n` used here).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal draw by inversion.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        crate::math::norm_quantile(self.uniform())
    }
}
