//! Execution-strategy dispatch for the data-parallel sweeps.
//!
//! Every hot loop in this crate (realization-enumeration reductions, DP
//! lattice levels, Monte Carlo trials, corpus processing) is a map over an
//! index range followed by an order-respecting reduction. This module funnels
//! all of them through two helpers so the parallel and sequential paths are
//! guaranteed to produce results in identical order: the map output is
//! collected positionally, and callers fold it sequentially. That makes every
//! aggregate bit-identical across `ExecMode`s and across runs.
//!
//! The `parallel` cargo feature (on by default) pulls in rayon and makes
//! [`ExecMode::default`] parallel. Without the feature the crate compiles
//! with no rayon dependency and everything runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Which execution strategy a sweep should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn ordered_map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter().map(f).collect(),
    }
}

/// Maps a fallible `f` over `items`; the first error (by input order in the
/// sequential path, by rayon's find semantics otherwise) aborts the sweep.
pub fn try_ordered_map<T, U, E, F>(
    mode: ExecMode,
    items: &[T],
    f: F,
) -> std::result::Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> std::result::Result<U, E> + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter().map(f).collect(),
    }
}

/// Fallible variant of `ordered_map_range`.
pub fn try_ordered_map_range<U, E, F>(
    mode: ExecMode,
    len: usize,
    f: F,
) -> std::result::Result<Vec<U>, E>
where
    U: Send,
    E: Send,
    F: Fn(usize) -> std::result::Result<U, E> + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..len).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..len).into_par_iter().map(f).collect(),
    }
}

/// Maps `f` over an index range, preserving index order in the output.
pub fn ordered_map_range<U, F>(mode: ExecMode, len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..len).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..len).into_par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_map_preserves_order() {
        let xs: Vec<u64> = (0..100).collect();
        let out = ordered_map(ExecMode::Sequential, &xs, |x| x * 2);
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<u64>>());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_map_matches_sequential_bitwise() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let seq = ordered_map(ExecMode::Sequential, &xs, |x| x * 1.000001 + 0.5);
        let par = ordered_map(ExecMode::Parallel, &xs, |x| x * 1.000001 + 0.5);
        assert_eq!(seq, par, "ordered map must be order-deterministic");
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_try_map_propagates_errors() {
        let xs: Vec<u32> = (0..1000).collect();
        let res = try_ordered_map(ExecMode::Parallel, &xs, |&x| {
            if x == 777 {
                Err("bad")
            } else {
                Ok(x)
            }
        });
        assert_eq!(res.unwrap_err(), "bad");
    }
}
