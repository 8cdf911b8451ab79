//! Keyed random streams.
//!
//! Every random draw in the crate comes from a stream identified by
//! `(master_seed, purpose, index)`, so results never depend on the order in
//! which runs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// 64-bit key derived from the stream coordinates.
pub fn derive_key(master_seed: u64, purpose: &str, index: u64) -> u64 {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ fnv1a(purpose.as_bytes()));
    splitmix64(b ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn stream(master_seed: u64, purpose: &str, index: u64) -> Rng {
    let k0 = derive_key(master_seed, purpose, index);
    let mut seed = [0u8; 32];
    let mut k = k0;
    for chunk in seed.chunks_mut(8) {
        k = splitmix64(k);
        chunk.copy_from_slice(&k.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
