//! Labelled seed derivation.
//!
//! Each concern (initialization, data generation, batching, evaluation)
//! draws from its own generator derived from a parent seed and a label, so
//! changing how much one concern consumes never shifts another's stream.

use rand::SeedableRng;

pub type Rng = rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Child seed for `label` under `parent`.
pub fn derive(parent: u64, label: &str) -> u64 {
    splitmix64(parent ^ splitmix64(fnv1a(label.as_bytes())))
}

/// Child seed for the `index`-th item of a labelled family.
pub fn derive_indexed(parent: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(parent, label) ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for `label` under `parent`.
pub fn labelled(parent: u64, label: &str) -> Rng {
    stream(derive(parent, label))
}
