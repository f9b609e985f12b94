//! Deterministic pseudorandom primitives.
//!
//! Every random quantity in the toolkit is a pure function of a 64-bit seed
//! and a structured coordinate (a tree path, a stream index, a grid point).
//! The building block is a full-avalanche 64→64 bit mixer; structured inputs
//! are folded into the state one word at a time. This keeps generation
//! stateless and order-independent: no tree is ever stored, and querying the
//! same vertex from two machines (or two thread schedules) yields identical
//! bits.

/// Domain-separation constant for vertex-increment words.
pub(crate) const PATH_SALT: u64 = 0x9e3c_5a17_b2d4_6e81;
/// Domain-separation constant for algorithm-side uniform streams.
pub(crate) const ALGO_SALT: u64 = 0x5b1d_99f3_0c77_24a5;
/// Domain-separation constant for derived seeds (experiment grids).
pub(crate) const DERIVE_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;

/// Full-avalanche 64-bit mixer (the SplitMix64 finalizer).
///
/// Bijective on `u64`; flipping any input bit flips each output bit with
/// probability close to 1/2.
#[inline]
pub const fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Maps a 64-bit word to a uniform double in the open interval (0, 1).
///
/// Uses the top 52 bits, centered in the cell: `(w >> 12 + 0.5) * 2^-52`,
/// which is exact in f64 (no rounding), so the result lies in
/// [2^-53, 1 − 2^-53] and is never 0 or 1 — safe to feed into quantile
/// functions with singular endpoints. (A 53-bit variant would round its
/// top cell up to exactly 1.0.)
#[inline]
pub fn unit_from_word(w: u64) -> f64 {
    ((w >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Derives a child seed from a base seed and a list of coordinate words.
///
/// Hashing coordinate *values* (not positions in some enumeration) means a
/// grid can be extended with new points without shifting the randomness of
/// existing ones.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(base ^ DERIVE_SALT);
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

/// A deterministic stream of uniforms in (0, 1), indexed by position.
///
/// Used for the algorithm-side randomness (leaf draws, probe shuffles),
/// which is seeded separately from the environment so the two sources of
/// randomness can be varied independently.
#[derive(Debug, Clone)]
pub struct UniformStream {
    base: u64,
    k: u64,
}

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self { base: mix64(seed ^ ALGO_SALT), k: 0 }
    }

    /// Number of uniforms drawn so far.
    pub fn position(&self) -> u64 {
        self.k
    }

    /// Next uniform in (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        let u = unit_from_word(mix64(self.base ^ self.k));
        self.k += 1;
        u
    }

    /// Uniform integer in `[0, n)` by scaling (n ≤ 2^53 assumed; desk-scale
    /// shuffles stay far below that).
    pub fn next_index(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let u = self.next_uniform();
        ((u * n as f64) as u64).min(n - 1)
    }
}
