//! Random streams. Every chain, replicate and dataset draws from its own
//! ChaCha8 stream whose seed is `splitmix64(master ^ splitmix64(index))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `index` under `master`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn chain_rng(master: u64, index: u64) -> ChainRng {
    ChainRng::seed_from_u64(stream_seed(master, index))
}

pub fn seeded(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}
