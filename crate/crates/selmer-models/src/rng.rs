//! Seeded, splittable random streams.
//!
//! Every sampler takes a `&mut SelmerRng`. Parallel work is split into fixed
//! chunks, and chunk `k` always draws from stream `k` of the same seed, so
//! results do not depend on how chunks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SelmerRng = ChaCha8Rng;

/// Stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> SelmerRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Split `total` samples into chunks of at most `chunk` samples.
/// Returns `(stream index, size)` pairs.
pub fn chunks(total: u64, chunk: u64) -> Vec<(u64, u64)> {
    let chunk = chunk.max(1);
    let mut out = Vec::new();
    let mut left = total;
    let mut k = 0;
    while left > 0 {
        let s = left.min(chunk);
        out.push((k, s));
        left -= s;
        k += 1;
    }
    out
}
