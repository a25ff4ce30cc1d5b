//! Deterministic random streams.
//!
//! Every stochastic component draws from a [`SimRng`] derived from a base
//! seed and a path of integer labels. The same `(seed, labels)` pair always
//! yields the same sequence, independent of thread scheduling or of how many
//! other streams were created before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream for `seed` refined by `labels`.
pub fn stream(seed: u64, labels: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, labels))
}

/// Child seed for `seed` refined by `labels`.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut key = mix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    for &label in labels {
        key = mix64(key ^ mix64(label.wrapping_add(0xD134_2543_DE82_EF95)));
    }
    key
}

/// Stable label for a human-readable stream name.
pub fn label(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
