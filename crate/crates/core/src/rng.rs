//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`Stream`], a ChaCha8
//! generator. Independent workers derive their generator from a master
//! seed and a worker index: the key comes from the master seed and the
//! worker index selects the ChaCha stream, so `stream(seed, k)` never
//! overlaps `stream(seed, j)` for `j != k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Generator for worker `worker` under master seed `seed`.
pub fn stream(seed: u64, worker: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// Generator for the main (worker 0) stream of `seed`.
pub fn master(seed: u64) -> Stream {
    stream(seed, 0)
}
