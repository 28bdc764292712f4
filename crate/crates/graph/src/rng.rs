//! Counter-based seed splitting.
//!
//! All randomness flows from one user seed. A stream is identified by a
//! 64-bit counter: `stream_rng(seed, c)` is ChaCha8 keyed by `seed` and
//! positioned on stream `c`, so independent consumers (seeds of an
//! experiment, graphs of a batch, Monte-Carlo trials) never share draws and
//! do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Combines a parent counter with a child index into a new stream counter.
pub fn substream(parent: u64, child: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = parent
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(child)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
