//! Counter-based random number streams.
//!
//! Every random quantity in the crate is drawn from a stream addressed by a
//! key built from the user seed plus structural coordinates (domain,
//! replica, step, sub-step). The mapping (key, counter) -> u64 is a pure
//! function, so results are reproducible bit-for-bit regardless of thread
//! scheduling or of the shape taken by adaptive step halving.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of words into a stream key.
pub fn key(words: &[u64]) -> u64 {
    let mut state = 0x243F_6A88_85A3_08D3; // pi fraction, arbitrary non-zero start
    for &w in words {
        state = mix64(state ^ w);
    }
    state
}

/// Domain separators so unrelated consumers never share a stream.
pub mod domain {
    pub const SDE_STEP: u64 = 1;
    pub const TRIDIAG: u64 = 2;
    pub const TEST: u64 = 99;
}

/// A counter-based stream: the `i`-th output is `mix64(key + i*GOLDEN)`,
/// i.e. the splitmix64 sequence seeded at `key`.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    ctr: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { key, ctr: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.ctr.wrapping_mul(GOLDEN)));
        self.ctr += 1;
        v
    }

    /// Uniform draw in (0, 1]; never returns 0 so logarithms are safe.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller (cosine branch).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (Stream::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        Stream::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = Stream::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
