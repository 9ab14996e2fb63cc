//! Order-preserving parallel map behind a worker-count knob.

use rayon::prelude::*;

/// Maps `f` over `items` on up to `jobs` threads. Output order matches input order, so results
/// never depend on the worker count.
pub fn par_map<I, O, F>(jobs: usize, items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(usize, &I) -> O + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()),
        Err(_) => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
    }
}
