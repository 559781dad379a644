//! Named, splittable random streams.
//!
//! Every consumer of randomness asks for a stream by `(seed, purpose, index)`. The seed keys a
//! ChaCha20 generator and `(purpose, index)` selects one of its 2^64 independent streams, so
//! adding a new consumer never shifts the numbers drawn by an existing one.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn stream_id(purpose: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in purpose.bytes().chain([0xff]).chain(index.to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose, index));
    rng
}

/// A fresh 64-bit seed for a sub-component.
pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    stream(seed, purpose, index).next_u64()
}
