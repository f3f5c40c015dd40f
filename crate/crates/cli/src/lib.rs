//! Experiment runner for the mfsim toolkit: config parsing, the eight
//! experiment pipelines, and machine-readable report emission.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::Path;

use config::ExperimentConfig;
use report::{RunOutcome, RunReport};

/// Runs one experiment and materializes its report and tables under
/// `out_dir`. Errors are config/runtime problems (exit code 2 territory);
/// statistical failures are reported through `RunReport::pass`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunReport, anyhow::Error> {
    config.validate()?;
    let started = std::time::Instant::now();
    let outcome: RunOutcome = match config.kind {
        config::ExperimentKind::Simulate => experiments::simulate::run(config)?,
        config::ExperimentKind::Picard => experiments::picard::run(config)?,
        config::ExperimentKind::Weakcheck => experiments::weakcheck::run(config)?,
        config::ExperimentKind::Duality => experiments::duality::run(config)?,
        config::ExperimentKind::Rate => experiments::rate::run(config)?,
        config::ExperimentKind::Chaos => experiments::chaos::run(config)?,
        config::ExperimentKind::Stratcheck => experiments::stratcheck::run(config)?,
        config::ExperimentKind::Assumptions => experiments::assumptions::run(config)?,
    };
    let wall = started.elapsed().as_secs_f64();
    RunReport::materialize(config, outcome, wall, out_dir)
}
