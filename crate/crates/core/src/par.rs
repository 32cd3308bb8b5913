//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) per-item work runs on the rayon
//! pool. Every helper evaluates each item independently and collects results in
//! input order, so parallel and sequential execution are bit-identical.

/// Execution strategy for batched per-sample work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when compiled with the `parallel` feature; otherwise
    /// identical to `Sequential`.
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

/// Below this many items the rayon dispatch costs more than it saves.
pub const PAR_MIN_LEN: usize = 256;

impl Exec {
    /// Whether a batch of `len` items would be dispatched to the thread pool.
    pub fn runs_in_pool(self, len: usize) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel && len >= PAR_MIN_LEN
    }

    /// `f` applied to every element of `items`, results in input order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.runs_in_pool(items.len()) {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// `f(i)` for `i in 0..n`, results in index order.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.runs_in_pool(n) {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}
