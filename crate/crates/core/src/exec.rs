//! Execution helpers for the data-parallel inner loops.
//!
//! With the `parallel` feature the heavy loops fan out through rayon; without
//! it the same entry points run sequentially. All reductions follow a fixed
//! chunk tree keyed to element indices, so the result is bit-identical for
//! any thread count, including the sequential fallback.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Leaf size for tree reductions. Chunks below this are summed serially.
const LEAF: usize = 512;

/// Execution mode carried by the structures that own hot loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls
    /// back to sequential execution.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        Exec::Parallel
    }
}

impl Exec {
    #[cfg(feature = "parallel")]
    pub fn is_parallel(self) -> bool {
        matches!(self, Exec::Parallel)
    }

    #[cfg(not(feature = "parallel"))]
    pub fn is_parallel(self) -> bool {
        false
    }
}

/// Sum with a fixed binary split tree. Deterministic regardless of threads.
pub fn tree_sum(exec: Exec, xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = split_point(xs.len());
    let (a, b) = xs.split_at(mid);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        let (sa, sb) = rayon::join(|| tree_sum(exec, a), || tree_sum(exec, b));
        return sa + sb;
    }
    tree_sum(exec, a) + tree_sum(exec, b)
}

/// Split at the largest power-of-two multiple of LEAF below `len` so the
/// tree shape depends only on the length.
fn split_point(len: usize) -> usize {
    let mut half = LEAF;
    while half * 2 < len {
        half *= 2;
    }
    half
}

/// Map an index range and collect results in index order.
pub fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(exec: Exec, n: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && n > 1 {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Map items and collect results in input order.
pub fn map_items<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(exec: Exec, items: &[T], f: F) -> Vec<U> {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && items.len() > 1 {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Fill `out[i] = f(i)` chunk by chunk. Each element is written by exactly
/// one worker, so the output does not depend on scheduling.
pub fn fill_indexed<F: Fn(usize) -> f64 + Sync + Send>(exec: Exec, out: &mut [f64], f: F) {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && out.len() > 4 * LEAF {
        out.par_chunks_mut(LEAF).enumerate().for_each(|(c, chunk)| {
            let base = c * LEAF;
            for (i, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + i);
            }
        });
        return;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

/// Run `f` inside a rayon pool with the given number of threads.
/// `threads = 0` keeps the default pool. Without the `parallel` feature the
/// closure just runs on the calling thread.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool construction");
            return pool.install(f);
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
