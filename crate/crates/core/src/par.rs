//! Order-preserving data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the current
//! rayon pool; without it everything runs on the calling thread. Results are
//! always returned in input order, so reductions over them are deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f(index, item)` to every item and collects results in order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// A worker pool sized once and reused for many calls.
#[cfg(feature = "parallel")]
pub struct Pool(Option<rayon::ThreadPool>);

#[cfg(feature = "parallel")]
impl Pool {
    /// `workers` threads, or the global pool (all cores) when `None`.
    pub fn new(workers: Option<usize>) -> Pool {
        Pool(workers.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().ok()))
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.0 {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub struct Pool;

#[cfg(not(feature = "parallel"))]
impl Pool {
    pub fn new(_workers: Option<usize>) -> Pool {
        Pool
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        f()
    }
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    Pool::new(workers).install(f)
}

/// Whether the crate was built with the parallel backend.
pub const PARALLEL: bool = cfg!(feature = "parallel");
