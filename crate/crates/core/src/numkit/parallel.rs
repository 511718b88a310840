//! Deterministic batch parallelism.
//!
//! Work is cut into chunks whose boundaries depend only on the item count
//! and chunk size, never on the worker count. Results come back in chunk
//! order, so any reduction over them has a fixed summation order and the
//! outcome is identical for every `LLL_THREADS` setting.

use std::sync::OnceLock;

pub const THREADS_ENV: &str = "LLL_THREADS";

/// Worker cap: `LLL_THREADS` if set to a positive integer, else the number
/// of available cores.
pub fn threads() -> usize {
    static N: OnceLock<usize> = OnceLock::new();
    *N.get_or_init(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    })
}

/// Applies `f(start, end)` to consecutive `[start, end)` ranges of width
/// `chunk` covering `0..n` and returns the results in range order.
pub fn map_chunks<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, usize) -> R + Sync,
{
    let chunk = chunk.max(1);
    let ranges: Vec<(usize, usize)> = (0..n).step_by(chunk).map(|s| (s, (s + chunk).min(n))).collect();
    let workers = threads().min(ranges.len());
    if workers <= 1 {
        return ranges.into_iter().map(|(s, e)| f(s, e)).collect();
    }
    let mut out: Vec<Option<R>> = (0..ranges.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let ranges = &ranges;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..ranges.len()).step_by(workers).map(|i| (i, f(ranges[i].0, ranges[i].1))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every chunk ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let parts = map_chunks(10, 3, |s, e| (s, e));
        assert_eq!(parts, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
        assert!(map_chunks(0, 4, |s, e| (s, e)).is_empty());
    }
}
