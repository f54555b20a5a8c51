//! Deterministic substreams keyed by (seed, stream, lane).
//!
//! A run derives one generator per (seed, step, replicate) so that Monte
//! Carlo replicates and parameter sweeps are independent and order-free,
//! while a single run consumes variates in a fixed documented order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; full-period bijective mixer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha8 stream from a seed and two stream indices.
///
/// `stream` is typically the step index and `lane` the replicate index.
/// Distinct index tuples yield statistically independent generators.
pub fn substream(seed: u64, stream: u64, lane: u64) -> ChaCha8Rng {
    let mut acc = mix(seed ^ GOLDEN);
    for w in [stream, lane] {
        acc = mix(acc.wrapping_add(GOLDEN) ^ mix(w.wrapping_add(GOLDEN)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        acc = acc.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1));
        chunk.copy_from_slice(&mix(acc).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
