//! Row-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; otherwise they run the
//! same closures sequentially. Work is always split into fixed-size chunks and
//! partial results are combined in chunk order, so the output is bit-identical
//! across thread counts and across both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per reduction chunk. Fixed so that floating-point reduction order does
/// not depend on the number of worker threads.
pub const REDUCE_CHUNK: usize = 32;

/// Evaluates `f(i)` for `i in 0..n`, collecting results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Calls `f(i, row)` for every `width`-sized row of `data`.
pub fn for_each_row_mut<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Sums `len`-long vectors produced by `accumulate` over `0..n`.
///
/// `accumulate(i, acc)` adds item `i`'s contribution into `acc`. Items are
/// grouped into chunks of [`REDUCE_CHUNK`]; each chunk is accumulated
/// sequentially and chunk totals are added in ascending chunk order.
pub fn chunked_sum<F>(n: usize, len: usize, accumulate: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partials = map_range(chunks, |c| {
        let mut acc = vec![0.0; len];
        let end = ((c + 1) * REDUCE_CHUNK).min(n);
        for i in c * REDUCE_CHUNK..end {
            accumulate(i, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Number of worker threads available to parallel sections.
pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Configures the global worker pool. A no-op in sequential builds.
pub fn init_thread_pool(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        // Fails only if already initialized, in which case the existing pool stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
