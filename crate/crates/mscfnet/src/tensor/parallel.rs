//! Plane-level data parallelism. Every parallel loop assigns each output
//! plane (or chunk) to exactly one task and keeps the per-plane accumulation
//! order fixed, so results are bitwise identical with and without the
//! `parallel` feature and for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f(index, chunk)` to consecutive `chunk_len` slices of `data`.
pub fn for_each_chunk_mut<F>(data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert_eq!(data.len() % chunk_len, 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
    }
}

/// Build a vector of `n` f64 values where element `i` is `f(i)`.
pub fn map_indexed<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
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
