//! Seeded randomness for synthetic embeddings and oracle noise.
//!
//! The generator is pinned down to the algorithm level because generated
//! catalogs and oracle traces are reproducibility contracts: any
//! reimplementation, in any language, must be able to produce the same
//! bytes from the same seed. The recipe is:
//!
//! - **SplitMix64** (Steele, Lea & Flood; the mixer used by
//!   `java.util.SplittableRandom`): state advances by the golden-gamma
//!   constant `0x9E3779B97F4A7C15`, and each output is the advanced state
//!   passed through the two-round murmur-style finalizer below.
//! - **Uniform doubles** take the top 53 bits of an output, scaled by 2⁻⁵³,
//!   giving values in `[0, 1)`.
//! - **Standard normals** come from the classic Box–Muller transform:
//!   `r = sqrt(-2 ln u1)` with `u1 = 1 - uniform()` (so the log argument
//!   stays in `(0, 1]`), `theta = 2π·uniform()`, producing the pair
//!   `(r cos theta, r sin theta)`. The cosine value is returned first and
//!   the sine value on the next call; the stream consumes both.

use libm::{cos, log, sin, sqrt};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Derive an independent stream seed: `derive_seed(seed, k)` equals the
/// `(k+1)`-th raw output of `SplitMix64::new(seed)`, skipping the first `k`.
/// Used to give each concept its own oracle noise stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    SplitMix64::new(seed.wrapping_add(stream.wrapping_mul(GOLDEN_GAMMA))).next_u64()
}

/// Standard-normal stream over SplitMix64 via Box–Muller.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource {
            rng: SplitMix64::new(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.next_f64(); // in (0, 1]; keeps log finite
        let u2 = self.rng.next_f64();
        let r = sqrt(-2.0 * log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * sin(theta));
        r * cos(theta)
    }

    /// Fill `out` with consecutive standard normals.
    pub fn fill(&mut self, out: &mut [f64]) {
        for slot in out {
            *slot = self.sample();
        }
    }
}
