//! Index-ordered parallel map on a pool of a fixed size.

use rayon::prelude::*;

/// Evaluates `f(0..count)` on `threads` workers and returns the results in
/// index order, so any later reduction is independent of scheduling.
pub(crate) fn map_indexed<T, F>(threads: usize, count: usize, f: F) -> Result<Vec<T>, String>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if threads <= 1 {
        return Ok((0..count).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}
