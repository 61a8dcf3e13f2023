//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! plain iterator loops. Callers only ever reduce the returned vectors in
//! index order, which keeps floating-point results independent of the
//! scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..len).map(f).collect()`, in parallel when enabled.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Apply `f(chunk_index, chunk)` to consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
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

/// Whether the rayon path is compiled in.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
