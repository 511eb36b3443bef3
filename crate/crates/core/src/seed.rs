//! Deterministic seed derivation.
//!
//! Every random choice in the pipeline draws from a ChaCha8 stream whose seed
//! is `derive(global, stage, source_id, counter)`. The mix is a chain of
//! SplitMix64 finalizers over the four inputs; `source_id` is hashed with
//! 64-bit FNV-1a so the result does not depend on the std hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Pipeline stages that consume randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    PoolSampling = 1,
    ClipSampling = 2,
    Downsample = 3,
    Augment = 4,
    Shuffle = 5,
    Init = 6,
    Synth = 7,
    GradcheckPick = 8,
}

pub fn derive(global: u64, stage: Stage, source_id: &str, counter: u64) -> u64 {
    let mut h = splitmix64(global);
    h = splitmix64(h ^ stage as u64);
    h = splitmix64(h ^ fnv1a(source_id.as_bytes()));
    splitmix64(h ^ counter)
}

pub fn rng(global: u64, stage: Stage, source_id: &str, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(global, stage, source_id, counter))
}
