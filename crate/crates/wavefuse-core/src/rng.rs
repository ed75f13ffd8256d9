//! Deterministic random number generation.
//!
//! Every seeded operation in this crate draws from [`SplitMix64`], so outputs
//! are reproducible bit-for-bit across platforms and across independent
//! implementations of the same contracts. The generator is fully specified
//! here rather than delegated to an external crate whose stream might change
//! between versions.
//!
//! SplitMix64 (Steele, Lea & Flood; public domain reference implementation):
//! the state advances by the 64-bit golden-ratio constant `0x9E3779B97F4A7C15`
//! and each output is the finalizer
//!
//! ```text
//! z  = state
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//! z ^= z >> 27;  z *= 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! Derived draws are defined on top of `next_u64`:
//! - `next_f64`: the high 53 bits scaled into `[0, 1)`.
//! - `next_below(n)`: `next_u64() % n`.
//! - `next_gaussian`: Box-Muller on two fresh uniforms, using
//!   `sqrt(-2 ln u1) * cos(2 pi u2)` with `u1` in `(0, 1]`.
//! - `shuffle`: Fisher-Yates from the last element down, swapping index `i`
//!   with `next_below(i + 1)`.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 finalizer on a raw 64-bit value.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seeded generator; see the module docs for the exact stream
/// definition.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw via Box-Muller; consumes two uniforms per call.
    pub fn next_gaussian(&mut self) -> f64 {
        // u1 shifted into (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Derives an independent child seed from a base seed and a label path.
///
/// Used to hand every scene, corruption cell, and weight tensor its own
/// stream: `derive_seed(s, &[a, b])` folds each part into the running value
/// through the SplitMix64 finalizer, so nearby labels give unrelated streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut acc = mix(base.wrapping_add(GAMMA));
    for &p in parts {
        acc = mix(acc ^ p.wrapping_mul(GAMMA));
    }
    acc
}
