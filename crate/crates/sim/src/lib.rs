//! File formats, experiment orchestration and the `amod` command line for
//! the `amod-core` market simulator.
//!
//! An experiment resolves a scenario (a JSON file or the synthetic
//! generator), calibrates the choice model for the operator count, trains
//! learned operators when no checkpoint is given, and evaluates every
//! operator over seeded runs. Outputs land in one directory:
//!
//! - `metrics.csv`: one row per run and operator plus a `total` row.
//! - `summary.json`: the resolved setup and mean/sd of every metric.
//! - `curves.csv`: per-episode training reward and losses.
//! - `checkpoint_op{o}.json`: actor and critic tensors per operator.

pub mod checkpoint;
pub mod experiment;
pub mod metrics;
pub mod scenario_file;
pub mod sweep;

pub use experiment::{run_experiment, ExperimentConfig, PolicyKind, ScenarioSource, WageProfile};
