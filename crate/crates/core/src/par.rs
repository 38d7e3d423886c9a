//! Plane-level data parallelism.
//!
//! Every kernel writes its output in disjoint chunks (one output plane or row
//! per chunk) and fixes the summation order inside a chunk, so results do not
//! depend on how many workers run. With the `parallel` feature off, or inside
//! a one-thread pool, chunks run sequentially on the caller.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn for_each_chunk<F>(out: &mut [f32], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 && out.len() > chunk {
            out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
    }
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Runs `f` with exactly `threads` workers available to the kernels.
///
/// `threads == 1` always takes the sequential path.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("failed to build worker pool");
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Workers visible to kernels from the current context.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
