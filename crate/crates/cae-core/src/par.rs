//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (the default) these fan work out over rayon;
//! without it they run plain loops. Results are identical either way: the
//! units of work (goal slices, gradient chunks) are independent, and
//! floating-point reductions always combine per-chunk partials in chunk
//! order, so sums do not depend on the thread count.

/// Chunk length for batch gradient reductions. Fixed (not derived from the
/// thread count) so partial sums are the same no matter how work is split.
pub const REDUCE_CHUNK: usize = 32;

/// Map `0..n` through `f` and collect in index order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `0..n` through `f` and collect in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sequential twin of [`map_collect`], kept callable with the feature on so
/// benchmarks can compare both paths on the same build.
pub fn map_collect_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool. `1` forces sequential execution even on
/// the parallel build; callers treat failures after first use as benign.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) {
    if n >= 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) {}
