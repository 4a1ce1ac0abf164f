//! Splittable seed derivation so every (site, purpose, round) stream is
//! independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags mixed into derived seeds.
pub mod stream {
    pub const BASE_PATTERN: u64 = 0x01;
    pub const SITE_MASK: u64 = 0x02;
    pub const SUBTYPE_MASK: u64 = 0x03;
    pub const LABEL_MASK: u64 = 0x04;
    pub const SAMPLE: u64 = 0x05;
    pub const SPLIT: u64 = 0x06;
    pub const AUTOENCODER_INIT: u64 = 0x10;
    pub const AUTOENCODER_TRAIN: u64 = 0x11;
    pub const CLASSIFIER_INIT: u64 = 0x12;
    pub const CLASSIFIER_TRAIN: u64 = 0x13;
    pub const PARTITION: u64 = 0x20;
    pub const SIGNS: u64 = 0x30;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
