//! Seeded, chunked random sampling.
//!
//! Work is split into fixed-size chunks; chunk `i` draws from a ChaCha stream
//! keyed by `(seed, i)`. Chunks may run on any number of threads and are
//! always recombined in chunk order, so outputs never depend on the thread
//! count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Number of samples drawn per chunk.
pub const CHUNK_SIZE: usize = 4096;

/// Random generator for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Half-open sample ranges covering `0..count` in chunks of [`CHUNK_SIZE`].
pub fn chunk_ranges(count: usize) -> Vec<std::ops::Range<usize>> {
    (0..count.div_ceil(CHUNK_SIZE))
        .map(|c| c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(count))
        .collect()
}

/// Draws a vector of i.i.d. `N(0, stddev²)` entries.
pub fn normal_vector<R: rand::Rng + ?Sized>(rng: &mut R, len: usize, stddev: f64) -> DVector<f64> {
    DVector::from_iterator(
        len,
        (0..len).map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * stddev
        }),
    )
}

/// Runs `f` once per chunk, in parallel, returning results in chunk order.
pub fn map_chunks<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, std::ops::Range<usize>) -> T + Sync,
{
    chunk_ranges(count)
        .into_par_iter()
        .enumerate()
        .map(|(i, range)| {
            let mut rng = chunk_rng(seed, i as u64);
            f(&mut rng, range)
        })
        .collect()
}

/// `count` vectors of i.i.d. `N(0, stddev²)` entries, deterministic in `seed`.
pub fn normal_samples(count: usize, len: usize, stddev: f64, seed: u64) -> Vec<DVector<f64>> {
    map_chunks(count, seed, |rng, range| {
        range
            .map(|_| normal_vector(rng, len, stddev))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}
