//! Seed plumbing and the portable Gaussian stream used for projection matrices.
//!
//! `GaussianStream` is counter-based: entry `i` of the stream for seed `s` is
//!
//! ```text
//! key   = splitmix64(s)
//! u64_j = splitmix64_mix(key + (j + 1) * 0x9E3779B97F4A7C15)      (wrapping)
//! u1    = ((u64_{2i}   >> 11) + 1) * 2^-53                        in (0, 1]
//! u2    =  (u64_{2i+1} >> 11)      * 2^-53                        in [0, 1)
//! z_i   = sqrt(-2 ln u1) * cos(2 pi u2)
//! ```
//!
//! `ln` and `cos` come from `libm` (a port of musl's libm) rather than the
//! platform math library, so the stream is bit-identical on every target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn splitmix64(x: u64) -> u64 {
    mix(x.wrapping_add(GOLDEN_GAMMA))
}

/// Derives a child seed from a master seed and a stage label.
///
/// First eight bytes (little-endian) of `SHA-256(master_le || label)`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seeded ChaCha8 generator for sampling decisions (offsets, shuffles, k-means++).
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianStream {
    key: u64,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
        }
    }

    fn raw(&self, counter: u64) -> u64 {
        mix(self
            .key
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Standard normal variate at position `index`.
    pub fn at(&self, index: u64) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let a = self.raw(index.wrapping_mul(2));
        let b = self.raw(index.wrapping_mul(2).wrapping_add(1));
        let u1 = ((a >> 11) + 1) as f64 * SCALE;
        let u2 = (b >> 11) as f64 * SCALE;
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }
}
