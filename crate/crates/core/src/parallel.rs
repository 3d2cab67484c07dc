//! Execution policy for the data-parallel loops (view workers, k-means
//! restarts, benchmark sweeps).
//!
//! With the `parallel` feature the work is spread over a rayon pool; without
//! it, or with [`Parallelism::Sequential`], items run in index order on the
//! calling thread. Every parallel loop in the crate maps items to results
//! independently and collects them in index order, so both paths produce
//! identical values.

use std::env;

/// Environment variable capping view-worker parallelism; `0` selects the
/// sequential path.
pub const THREADS_ENV: &str = "MVDEC_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// At most this many worker threads.
    Threads(usize),
    /// Whatever the global rayon pool provides.
    #[default]
    Auto,
}

impl Parallelism {
    /// Reads [`THREADS_ENV`]; unset or unparsable means [`Parallelism::Auto`].
    pub fn from_env() -> Self {
        match env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            Some(0) => Parallelism::Sequential,
            Some(n) => Parallelism::Threads(n),
            None => Parallelism::Auto,
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, Parallelism::Sequential) || !cfg!(feature = "parallel")
    }

    /// Applies `f` to every item and returns the results in item order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Parallelism::Sequential => items.into_iter().map(f).collect(),
                Parallelism::Auto => items.into_par_iter().map(f).collect(),
                Parallelism::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
                    Err(_) => items.into_iter().map(f).collect(),
                },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            items.into_iter().map(f).collect()
        }
    }
}
