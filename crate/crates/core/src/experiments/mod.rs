//! Dataset construction, training runs over several seeds, baselines and
//! parameter sweeps.

mod config;
mod data;
mod run;
mod scenarios;
mod train;

pub use config::ExperimentConfig;
pub use data::{build_datasets, build_dt, line_of_sight_boxes, simulate, split_indices, Datasets, SimulatedData, Split};
pub use run::{
    evaluate_model, mean_std, run_baseline, run_method, run_proposed, run_triplet_with_alignment, sweep, BaselineKind,
    RunResult, SeedResult, SweepAxis, SweepTable,
};
pub use scenarios::{reference_scenario, ApSpec, LayoutSpec, ScenarioPreset};
pub use train::{estimate_positions, train, train_proposed, LossRecord, Method, TrainOutcome};

/// Run `f` on a thread pool capped by the `CHARTKIT_THREADS` environment
/// variable, or on the global pool when it is unset.
pub fn with_thread_limit<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var("CHARTKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool: {e}");
                f()
            }
        },
        _ => f(),
    }
}
