//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream selected by a
//! `(seed, key)` pair, where the key is a voxel index, grid index or slice
//! number. Results therefore do not depend on evaluation order or on how
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for `key` under `seed`.
pub fn keyed_rng(seed: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// Derive a sub-seed so unrelated consumers of one user seed do not share streams.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, mixed with the seed through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
