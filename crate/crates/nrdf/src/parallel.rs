use nrdf_core::simulation::{chunks, run_chunk, SimulationConfig, TrialSummary};
use rayon::prelude::*;

/// Runs the fixed trial chunks on the rayon pool and merges them in chunk
/// order, so the result is bit-identical to the sequential simulation for
/// any number of threads.
pub fn simulate_parallel(config: &SimulationConfig, thresholds: &[f64]) -> nrdf_core::Result<TrialSummary> {
    let steps = if config.record_trajectory { config.n + 1 } else { 0 };
    let parts = chunks(config.trials)
        .into_par_iter()
        .map(|range| run_chunk(config, thresholds, range))
        .collect::<nrdf_core::Result<Vec<_>>>()?;
    Ok(parts.iter().fold(TrialSummary::empty(thresholds.len(), steps), |acc, p| acc.merge(p)))
}
