//! Parallel trajectory sampling. Each trajectory owns its RNG stream, so the
//! result is identical for any worker count.

use rayon::prelude::*;

use diracsea_core::dynamics::{JumpTrajectory, ProcessCache};

use crate::error::{CliError, CliResult};

/// Run `f` inside a pool of `workers` threads (0 means one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trajectories `0..n_traj`, in id order.
pub fn sample_trajectories(cache: &ProcessCache<'_>, n_traj: usize, seed: u64) -> CliResult<Vec<JumpTrajectory>> {
    (0..n_traj as u64)
        .into_par_iter()
        .map(|id| cache.sample(seed, id).map_err(CliError::from))
        .collect()
}
