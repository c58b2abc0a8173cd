//! Seeded random streams.
//!
//! Every random draw in the crate flows through a [`RandomStream`]. Independent
//! streams are derived from a master seed and a path of integers (replication
//! index, attempt, block coordinates, ...), so results never depend on the order
//! in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seeded directly from `seed`.
pub fn stream(seed: u64) -> RandomStream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed from `seed` and a path of integers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        acc = splitmix64(&mut state) ^ acc.rotate_left(17);
    }
    acc
}

pub fn substream(seed: u64, path: &[u64]) -> RandomStream {
    stream(derive_seed(seed, path))
}
