//! Seeding contract.
//!
//! Every random draw in the crate is addressed by a root seed, a stream id and
//! a position inside that stream. A trial never shares a stream with another
//! trial, so results do not depend on how trials are scheduled on threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used everywhere randomness is consumed.
pub type StreamRng = ChaCha8Rng;

/// Generator positioned at the start of `stream` under `root`.
pub fn stream_rng(root: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Generator positioned `counter` 32-bit words into `stream`.
pub fn stream_rng_at(root: u64, stream: u64, counter: u128) -> StreamRng {
    let mut rng = stream_rng(root, stream);
    rng.set_word_pos(counter);
    rng
}

/// Derive an independent root seed for a named purpose (coloring, instance
/// generation, ...), so that two consumers of one user seed never collide.
pub fn subseed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(root ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
