//! Many independent trajectories on a worker pool.

use rayon::prelude::*;

use super::trajectory::{run_trajectory, TrajectoryConfig, TrajectoryRecord};
use crate::error::{Error, Result};

/// Configurations for `count` trajectories sharing a base config, one RNG
/// stream each.
pub fn replicate(base: &TrajectoryConfig, count: usize) -> Vec<TrajectoryConfig> {
    (0..count)
        .map(|i| TrajectoryConfig {
            stream: base.stream + i as u64,
            ..base.clone()
        })
        .collect()
}

/// Runs every configuration, returning results in input order regardless of
/// completion order. `threads = 0` uses the global pool.
pub fn run_ensemble(
    configs: &[TrajectoryConfig],
    threads: usize,
) -> Result<Vec<Result<TrajectoryRecord>>> {
    let work = || configs.par_iter().map(run_trajectory).collect::<Vec<_>>();
    if threads == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    Ok(pool.install(work))
}

/// Like [`run_ensemble`] but fails on the first failed trajectory.
pub fn run_ensemble_strict(
    configs: &[TrajectoryConfig],
    threads: usize,
) -> Result<Vec<TrajectoryRecord>> {
    run_ensemble(configs, threads)?.into_iter().collect()
}
