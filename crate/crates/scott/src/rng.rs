//! Seeded randomness.
//!
//! Every component draws from a [`ChaCha8Rng`] derived from one master seed
//! and a named stream, so individual stages (augmentation, init, dropout,
//! shuffling) can be perturbed independently without touching the others.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Derives a child seed from a master seed and a stream name.
///
/// Uses FNV-1a over the name followed by a splitmix64 finalizer; stable
/// across platforms and releases.
pub fn derive_seed(master: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

/// Derives a child seed keyed by a name and an index (epoch, instance, ...).
pub fn derive_seed_indexed(master: u64, stream: &str, index: u64) -> u64 {
    splitmix64(derive_seed(master, stream) ^ splitmix64(index.wrapping_add(0x9e37_79b9)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for a named sub-stream of the master seed.
pub fn stream_rng(master: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

/// RNG for a named, indexed sub-stream (per epoch / per instance).
pub fn indexed_rng(master: u64, stream: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed_indexed(master, stream, index))
}

/// One standard-normal draw (Box-Muller).
pub fn normal(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    // u1 in (0, 1]: avoids ln(0).
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    mean + std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fills a slice with N(mean, std^2) draws.
pub fn fill_normal(rng: &mut impl Rng, mean: f64, std: f64, out: &mut [f64]) {
    for v in out {
        *v = normal(rng, mean, std);
    }
}
