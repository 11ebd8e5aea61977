//! Data-parallel execution helpers.
//!
//! Grid evaluations, Monte Carlo path batches and bootstrap replicates are
//! all embarrassingly parallel; this module funnels them through a single
//! dispatch point. With the `parallel` feature (on by default) the maps run
//! on the rayon global pool; without it they run sequentially. The
//! `DIFFLAB_THREADS` environment variable caps the pool size, and
//! [`force_sequential`] switches the parallel build onto the sequential
//! code path at runtime (used by the benchmark suite to compare both).
//!
//! All helpers preserve input order, so results are identical — bit for bit —
//! whichever path executes them.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential code path even when the `parallel` feature is on.
pub fn force_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

/// True when maps will execute sequentially.
pub fn is_sequential() -> bool {
    if cfg!(not(feature = "parallel")) {
        return true;
    }
    FORCE_SEQUENTIAL.load(Ordering::SeqCst) || thread_cap() == Some(1)
}

/// Thread cap from `DIFFLAB_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    static CAP: once_cell::sync::Lazy<Option<usize>> = once_cell::sync::Lazy::new(|| {
        std::env::var("DIFFLAB_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n > 0)
    });
    *CAP
}

#[cfg(feature = "parallel")]
fn init_pool() {
    use once_cell::sync::OnceCell;
    static INIT: OnceCell<()> = OnceCell::new();
    INIT.get_or_init(|| {
        if let Some(n) = thread_cap() {
            // Ignore the error if a global pool already exists.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

/// Map `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            init_pool();
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Map `f` over a slice, preserving element order in the output.
pub fn map_slice<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            init_pool();
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}
