//! Experiment configs, runs, sweeps, metrics files and text generation.

pub mod config;
pub mod generate;
pub mod metrics;
pub mod runner;

pub use config::{DataSource, ExperimentConfig, Task};
pub use generate::generate_text;
pub use metrics::{emit_metrics, load_metrics, mask_wall_clock, MetricsRecord, RunStatus};
pub use runner::{prepare_data, run_sweep, run_sweep_with, run_training, Cell, PreparedData, SweepResult};
