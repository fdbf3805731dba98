//! Data-parallel helpers. With the `parallel` feature these dispatch to
//! rayon unless sequential execution was requested at runtime; without the
//! feature everything runs on the calling thread.

use std::sync::atomic::{AtomicBool, Ordering};

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force sequential execution even when the `parallel` feature is on.
pub fn set_sequential(on: bool) {
    SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::SeqCst)
}

/// Cap the worker count of the global pool. Only the first call has effect.
pub fn init_workers(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is fixed.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Apply `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
