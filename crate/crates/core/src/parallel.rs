//! Execution strategy for the data-parallel loops (force rows, Monte Carlo
//! trials). Parallel execution needs the `parallel` feature; without it the
//! `Parallel` variant silently runs sequentially.
//!
//! Every parallel loop computes each output element independently and
//! collects results in index order, so both strategies produce bit-identical
//! output.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Map `f` over `0..n` and collect in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Apply `f(i, chunk)` to consecutive `width`-sized chunks of `out`.
pub fn for_each_chunk<F>(exec: Execution, out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(width).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    out.chunks_mut(width).enumerate().for_each(|(i, c)| f(i, c));
}

/// Cap the global worker pool. Only the first call has any effect.
pub fn set_thread_limit(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
