//! Order-preserving map helpers with a compile-time parallel/sequential switch.
//!
//! With the `parallel` feature (default) `map` fans out over rayon; without it
//! the sequential fallback is used. Output order always matches input order,
//! so callers stay deterministic as long as the per-item closure is.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Sequential twin of [`map`], available regardless of features.
///
/// Exists so the bench suite can compare both execution modes in one build.
pub fn map_sequential<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    items.iter().map(f).collect()
}

/// Maps an index range `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_indices<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maps an index range `0..n`, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    (0..n).map(f).collect()
}
