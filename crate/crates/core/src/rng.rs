//! Counter-based random streams.
//!
//! A stream is identified by a seed plus a path of string labels, for
//! example `(7, ["1D-EIV", "train", "12", "samples"])`. The labels are hashed
//! with FNV-1a, mixed with the seed by SplitMix64 and expanded into a ChaCha8
//! key. Distinct paths give independent streams, so adding groups or
//! consumers never shifts existing draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic generator for `(seed, path)`.
pub fn stream(seed: u64, path: &[&str]) -> ChaCha8Rng {
    let mut h = FNV_OFFSET;
    for part in path {
        h = fnv1a(part.as_bytes(), h);
        // Separator so ["ab", "c"] and ["a", "bc"] differ.
        h = fnv1a(&[0xff], h);
    }
    let mut state = seed ^ h.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
