//! Seeded, chunked Monte-Carlo plumbing.
//!
//! Replicate `r` always belongs to chunk `r / CHUNK`, and every chunk draws
//! from its own ChaCha stream keyed by `(seed, chunk)`. Results are therefore
//! identical whatever the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const CHUNK: u64 = 4096;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Child seed for `(label, index)` under a master seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(master ^ h).wrapping_add(index))
}

/// Runs `body(rng, first_rep, count)` on each chunk of `reps` and returns the
/// per-chunk results in chunk order.
pub fn map_chunks<T, F>(reps: u64, seed: u64, body: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64, u64) -> T + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let count = CHUNK.min(reps - start);
            let mut rng = stream_rng(seed, c);
            body(&mut rng, start, count)
        })
        .collect()
}
