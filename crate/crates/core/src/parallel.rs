//! Optional data parallelism over independent output slots.
//!
//! Work is partitioned so that every output element is written by exactly one
//! task and every reduction runs in a fixed index order inside its task.
//! Parallel results are therefore bitwise identical to sequential ones; the
//! flag only trades wall-clock time. Sequential (`threads = 1`, the default)
//! is the documented reference mode.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(false);

/// Enable or disable the rayon-backed paths. `threads <= 1` selects the
/// sequential reference mode.
pub fn set_threads(threads: usize) {
    if threads > 1 {
        // Pool size is capped by rayon's global pool; building it explicitly
        // is only possible once per process, so a best-effort configure.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    PARALLEL.store(threads > 1, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// Apply `f(chunk_index, chunk)` over equal-sized disjoint chunks of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk > 0 && data.len() % chunk == 0);
    if parallel_enabled() && data.len() / chunk > 1 {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        for (i, c) in data.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}
