//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from a single master seed. Sub-streams
//! are addressed by a counter: the generator for `(master, stream)` is a
//! ChaCha8 generator seeded with `master` and switched to stream number
//! `stream`, so draw `i` of a Monte Carlo loop always sees the same numbers no
//! matter which worker thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for sub-stream `stream` of `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Mixes a master seed with a tag into a new seed (SplitMix64 finaliser).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
