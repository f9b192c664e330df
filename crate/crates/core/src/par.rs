//! Execution policy for the data-parallel loops.
//!
//! With the `parallel` feature (on by default) batch work is spread over the
//! rayon pool; without it every loop runs on the calling thread. Reductions
//! always walk the same fixed binary tree, so sequential and parallel runs
//! produce bit-identical sums.

use std::ops::{Add, Range};

/// Leaves of the reduction tree hold at most this many terms.
const LEAF: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly across threads. Output order is
    /// always index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Pairwise-tree sum of `term(i)` over `range`.
    pub fn tree_sum<T, F>(self, range: Range<usize>, zero: T, term: &F) -> T
    where
        T: Add<Output = T> + Copy + Send + Sync,
        F: Fn(usize) -> T + Sync,
    {
        if range.len() <= LEAF {
            return range.fold(zero, |acc, i| acc + term(i));
        }
        let mid = range.start + range.len() / 2;
        let (lo, hi) = (range.start..mid, mid..range.end);
        #[cfg(feature = "parallel")]
        if self.is_parallel() && range.len() >= 4096 {
            let (a, b) = rayon::join(
                || self.tree_sum(lo.clone(), zero, term),
                || self.tree_sum(hi.clone(), zero, term),
            );
            return a + b;
        }
        self.tree_sum(lo, zero, term) + self.tree_sum(hi, zero, term)
    }
}

/// Sequential pairwise-tree sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    Exec::Sequential.tree_sum(0..values.len(), 0.0, &|i| values[i])
}

/// Sizes the global rayon pool. Must run before any parallel work; a no-op
/// without the `parallel` feature.
pub fn configure_threads(threads: usize) -> crate::Result<()> {
    if threads == 0 {
        return Err(crate::Error::Config("thread count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::Config(format!("cannot size the thread pool: {e}")))?;
    Ok(())
}
