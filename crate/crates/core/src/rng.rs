//! Seeding scheme.
//!
//! A run owns one 64-bit seed. Independent substreams are ChaCha8 streams
//! over the same key: stream 0 feeds the gateway's mark/drop draws and
//! stream `i + 1` feeds source `i`. Adding a source therefore never perturbs
//! the draws of existing sources or of the gateway.
//!
//! Sweeps derive per-run seeds as `splitmix64(base ^ index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GATEWAY_STREAM: u64 = 0;

pub fn source_stream(index: usize) -> u64 {
    index as u64 + 1
}

/// Generator for substream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th run of a sweep rooted at `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ index)
}
