//! Execution policy: rayon data-parallel loops with a sequential fallback.
//!
//! Hot loops in this crate are shaped so that parallel workers only ever
//! write disjoint slices and every reduction happens sequentially in index
//! order afterwards. Outputs are therefore identical whichever path runs.
//!
//! With the `parallel` feature (default) the policy can also be switched at
//! runtime via [`set_parallel`]; the benchmark suite uses this to compare
//! both paths in one binary. Without the feature the crate has no rayon
//! dependency and every loop is a plain sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enables or disables the rayon path at runtime. No-op without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    #[cfg(feature = "parallel")]
    PARALLEL.store(enabled, Ordering::Relaxed);
    #[cfg(not(feature = "parallel"))]
    let _ = enabled;
}

/// True when the rayon path is compiled in and currently enabled.
pub fn parallel_enabled() -> bool {
    #[cfg(feature = "parallel")]
    {
        PARALLEL.load(Ordering::Relaxed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Applies `f` to every `width`-sized chunk of `data` with its chunk index
/// (the final chunk may be shorter).
///
/// This is the per-particle update primitive: with `width` one particle's
/// state slice, chunk `i` is particle `i`; block-sized widths batch several
/// particles per work item.
pub fn for_each_chunk_mut<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert!(width > 0);
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
        return;
    }
    for (i, chunk) in data.chunks_mut(width).enumerate() {
        f(i, chunk);
    }
}

/// Collects `f(0..n)` in index order; cells may run in parallel.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        let cells: Vec<Result<T, E>> = (0..n).into_par_iter().map(f).collect();
        return cells.into_iter().collect();
    }
    (0..n).map(f).collect()
}
