//! Experiment orchestration: configuration, the shared epoch trainer, the
//! four experiment runners, dataset perturbation, deterministic CSV/SVG
//! emission, manifests, and a fixed-order worker pool.

pub mod config;
pub mod csvio;
pub mod engine;
pub mod experiments;
pub mod manifest;
pub mod perturb;
pub mod svg;
pub mod workers;

pub use config::{EnvKind, ExperimentConfig, OptimizerConfig};
pub use engine::{
    mean_episode_return, step_loop, train_epoch, EpochReport, InnerLoop, StepLoopReport,
};
pub use experiments::{
    run_alias_toy, run_bias_spread, run_offpolicy, run_performance, train_probe, AliasToyMode,
    AliasToyRow, ExperimentOutput, RunRecord, RunStatus, VariantRun,
};
pub use manifest::{config_hash, write_manifest, Manifest};
pub use perturb::{perturb_dataset, PerturbPredicate, PerturbationSpec};
pub use workers::run_jobs;

#[cfg(test)]
mod tests;
