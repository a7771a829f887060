//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these dispatch to rayon; without
//! it they run the same closures sequentially. Every helper only parallelises
//! over independent items, so results are bit-identical in both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to consecutive chunks of `data` of length `chunk`, passing the
/// chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Elementwise `out[i] = f(i, out[i])`.
pub fn update_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize, f64) -> f64 + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut()
            .with_min_len(4096)
            .enumerate()
            .for_each(|(i, v)| *v = f(i, *v));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i, *v));
    }
}

/// Number of worker threads the parallel helpers use (1 without the feature).
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
