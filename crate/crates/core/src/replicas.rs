//! Parallel replica execution with a deterministic merge.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f(replica_id)` for ids `0..n` on `threads` worker threads (0 means
/// the rayon default) and returns the results in id order, so the output
/// does not depend on the thread count.
pub fn run_replicas<T, F>(n: u64, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}
