//! Data-parallel map helper with a sequential fallback.
//!
//! With the `parallel` feature (default), [`map`] fans out over the rayon
//! thread pool; without it, the same call degrades to a plain loop. Both
//! preserve input order, so results are identical either way. [`map_seq`]
//! is always sequential and exists so benchmarks can compare the two paths
//! in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    map_seq(items, f)
}

/// Always-sequential variant of [`map`].
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
