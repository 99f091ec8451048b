//! End-to-end experiment harness: scene generation, message pipelines,
//! compensation methods, sweeps and reports.

mod config;
mod logs;
mod methods;
mod pipeline;
mod report;
mod scene;
mod training;

pub use config::{ExperimentConfig, Method, NoiseLevel, TrainingSetConfig};
pub use logs::{message_log_name, replay, simulate, CollaboratorRecord, LogRecord, SimulationSummary, OBSERVATION_LOG};
pub use methods::{evaluate_methods, Models};
pub use pipeline::{parallel_map, point_records, run_pipeline, run_point, sweep_points, RunOptions, SweepPoint};
pub use report::{emit_report, ReportFiles, ResultRow, RunReport};
pub use scene::{scene_seed, CollaboratorInputs, EvalInputs, EvalTime};
pub use training::{generate_training_set, provision_estimator, train_for_config};
