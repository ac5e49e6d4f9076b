//! Deterministic counter-based random number generation.
//!
//! Every random draw in this crate flows through [`CounterRng`], a SplitMix64
//! generator: the n-th output is a pure function of `(key, n)`, so a stream can
//! be reproduced from its seed alone, on any platform, in any language that
//! implements the same 64-bit mixing function. Independent streams are derived
//! from a `(seed, stream)` pair, which lets per-frame work run in parallel and
//! still match a serial run bit for bit.
//!
//! Not cryptographically secure; never use for secrets.

/// Weyl-sequence increment from SplitMix64 (golden-ratio constant).
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from SplitMix64 / MurmurHash3.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based deterministic generator (SplitMix64 core).
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    /// Second Box-Muller sample held for the next `next_gauss` call.
    spare_gauss: Option<f64>,
}

impl CounterRng {
    /// Generator for the root stream of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, 0)
    }

    /// Generator for an independent stream identified by `(seed, stream)`.
    ///
    /// The stream id is mixed before being folded into the seed so that
    /// consecutive ids (frame indices, trial indices) do not produce
    /// correlated keys.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let key = mix64(seed ^ mix64(stream.wrapping_mul(GOLDEN_GAMMA) ^ 0xA076_1D64_78BD_642F));
        Self {
            key,
            counter: 0,
            spare_gauss: None,
        }
    }

    /// Next 64-bit output: `mix64(key + n * GAMMA)` for counter value n.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.key
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform double in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal sample via Box-Muller (two uniforms per pair).
    pub fn next_gauss(&mut self) -> f64 {
        if let Some(z) = self.spare_gauss.take() {
            return z;
        }
        // 1 - u keeps the argument of ln strictly positive.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gauss = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniformly distributed unit vector on the sphere.
    pub fn unit_vector(&mut self) -> [f64; 3] {
        let z = self.uniform(-1.0, 1.0);
        let phi = self.uniform(0.0, 2.0 * std::f64::consts::PI);
        let r = (1.0 - z * z).max(0.0).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    }
}
