//! Ordered data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (on by default) `Parallelism::Threads` runs on a
//! rayon pool; without it every mode runs on the calling thread. Results are
//! always returned in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Sequential,
    Threads(usize),
}

impl Parallelism {
    /// `Threads(n)` for `n > 1`, otherwise `Sequential`.
    pub fn from_threads(n: usize) -> Self {
        if n > 1 {
            Parallelism::Threads(n)
        } else {
            Parallelism::Sequential
        }
    }

    pub fn threads(&self) -> usize {
        match self {
            Parallelism::Sequential => 1,
            Parallelism::Threads(n) => (*n).max(1),
        }
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Parallelism::Sequential => items.iter().map(f).collect(),
            Parallelism::Threads(n) => threaded_map(*n, items, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn threaded_map<T, R, F>(n: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("cannot start thread pool ({e}), running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn threaded_map<T, R, F>(_n: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
