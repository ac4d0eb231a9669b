//! Thin dispatch layer between rayon and plain iteration.

#[cfg(feature = "parallel")]
pub fn map_indices<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept for benchmarking against the parallel path.
pub fn map_indices_seq<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..n).map(f).collect()
}
