//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) cell loops above [`PAR_MIN_CELLS`]
//! and ensemble maps run on the rayon pool. Without it everything runs on
//! the calling thread. Element-wise maps keep their output order, so results
//! are identical either way; reductions are always summed sequentially.

/// Below this many cells per-loop dispatch costs more than it saves.
pub const PAR_MIN_CELLS: usize = 1 << 14;

/// How an ensemble or sweep is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` degrades to `Sequential` when built without the feature.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluate `f` for every cell index `0..n`.
pub fn cells<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= PAR_MIN_CELLS {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Map over independent work items (ensemble members, sweep runs).
pub fn map<I, T, F>(items: &[I], exec: Execution, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec.effective() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Number of worker threads the parallel path will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Configure the global pool. Returns false if it was already initialised
/// or the crate was built without the `parallel` feature.
pub fn init_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}
