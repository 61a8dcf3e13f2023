//! Reproducible random streams.
//!
//! Each draw site asks for a stream by `(seed, tag, index)`. The `(seed, tag)`
//! pair selects a ChaCha key and `index` selects the 64-bit stream within that
//! key, so per-trial streams never overlap and the order in which trials run
//! does not matter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: &str, index: u64) -> StreamRng {
    let mut state = seed ^ fnv1a(tag.as_bytes()).rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one per sweep point.
pub fn child_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut state = seed ^ fnv1a(tag.as_bytes()) ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(&mut state)
}
