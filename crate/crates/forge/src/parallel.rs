//! Deterministic parallel helpers.
//!
//! Every helper maps over a fixed index set and combines results in index
//! order, so the output is bit-identical for any rayon pool size and for the
//! sequential build (`--no-default-features`). Reductions that would be
//! schedule-dependent (e.g. `par_iter().sum()`) are deliberately not offered.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk length used when splitting sample sets for reduction.
pub const CHUNK: usize = 64;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over fixed-size chunks of `0..len` and returns the per-chunk
/// results in chunk order. Chunk boundaries depend only on `len`, never on
/// the thread count, so a sequential fold of the result is reproducible.
pub fn map_chunks<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK);
    let bounds = |c: usize| (c * CHUNK)..((c + 1) * CHUNK).min(len);
    #[cfg(feature = "parallel")]
    {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| f(bounds(c)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_chunks).map(|c| f(bounds(c))).collect()
    }
}
