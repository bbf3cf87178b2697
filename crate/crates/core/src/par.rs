//! Row-level data parallelism.
//!
//! With the `parallel` feature rows are distributed over the rayon pool,
//! otherwise they are processed in order on the calling thread. Reductions
//! return one partial per row and the caller folds them in row order, so
//! results are bit-identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for every `stride`-long row of `out`.
pub(crate) fn for_each_row<F>(out: &mut [f64], stride: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(k, row)| f(k, row));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(stride)
        .enumerate()
        .for_each(|(k, row)| f(k, row));
}

/// Evaluates `f` for each row index in `rows`, preserving order.
pub(crate) fn map_rows<T, F>(rows: std::ops::Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return rows.into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return rows.map(f).collect();
}

/// Ordered sum of per-row partial sums.
pub(crate) fn sum_rows<F>(rows: std::ops::Range<usize>, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_rows(rows, f).into_iter().fold(0.0, |acc, x| acc + x)
}

/// Maximum of per-row maxima. NaN propagates.
pub(crate) fn max_rows<F>(rows: std::ops::Range<usize>, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_rows(rows, f).into_iter().fold(0.0, nan_max)
}

#[inline]
pub(crate) fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}
