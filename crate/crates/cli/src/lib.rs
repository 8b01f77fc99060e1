//! Experiment harness: configuration, presets and the end-to-end pipeline
//! behind the `dkfhtw` binary.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{ExperimentConfig, ObsSpec, SweepSpec, PRESETS};
pub use error::{HarnessError, HarnessResult, EXIT_CONFIG, EXIT_NUMERICAL};
pub use pipeline::{
    fit_stage, load_batch, load_fit, observables_stage, reproduce, reproduce_with, run, simulate_stage, sweep,
    Artifacts, RunManifest, SummaryRow, SweepManifest, SweepRow,
};

/// Caps the global worker pool at `DKFHTW_THREADS` when it is set.
pub fn init_thread_pool() -> HarnessResult<()> {
    let Ok(v) = std::env::var("DKFHTW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Config(format!("DKFHTW_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Config(format!("cannot size the worker pool: {e}")))
}
