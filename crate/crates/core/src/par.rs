//! Parallel reductions with an optional bitwise-reproducible mode.
//!
//! In deterministic mode the index range is cut into fixed-size chunks, the
//! chunks are summed in parallel and the partial sums are added in index
//! order, so the result does not depend on the number of threads.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

static DETERMINISTIC: AtomicBool = AtomicBool::new(true);

const CHUNK: usize = 4096;

/// Selects ordered (`true`, the default) or reassociating reductions.
pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::Relaxed);
}

pub fn is_deterministic() -> bool {
    DETERMINISTIC.load(Ordering::Relaxed)
}

/// `Σ_{i<n} f(i)`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if is_deterministic() {
        let parts: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
            .collect();
        parts.iter().sum()
    } else {
        (0..n).into_par_iter().map(&f).sum()
    }
}

/// Componentwise sum of a fixed-size array valued function.
pub fn sum_array<const K: usize, F>(n: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Sync + Send,
{
    let add = |mut a: [f64; K], b: [f64; K]| {
        for k in 0..K {
            a[k] += b[k];
        }
        a
    };
    if is_deterministic() {
        let parts: Vec<[f64; K]> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).fold([0.0; K], add))
            .collect();
        parts.into_iter().fold([0.0; K], add)
    } else {
        (0..n).into_par_iter().map(&f).reduce(|| [0.0; K], add)
    }
}

/// Largest value of `f` (or `-inf` for an empty range); order-independent.
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..n).into_par_iter().map(&f).reduce(|| f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_sum_is_thread_count_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (i as f64 + 1.0);
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sum(100_000, f));
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| sum(100_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
        let s = sum_array::<2, _>(10, |i| [i as f64, 1.0]);
        assert_eq!(s, [45.0, 10.0]);
        assert_eq!(max(5, |i| i as f64), 4.0);
    }
}
