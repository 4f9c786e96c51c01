//! Config-driven training, sweeps, checkpoint evaluation and report tables.

pub mod config;
pub mod evaluate;
pub mod report;
pub mod sweep;
pub mod train;

pub use config::{merge_json, preset, EvalConfig, OptimizerConfig, RunConfig, SweepSpec, PRESETS};
pub use evaluate::{evaluate, evaluate_loaded, geometry_embedding, EvalWhat, GeometrySummary};
pub use report::{collect_records, report, RunSummaryRow};
pub use sweep::{sweep, SweepSummaryRow};
pub use train::{load_vae, train, EvalEntry, MetricRow, RunRecord, RunStatus, TrainLogRow, TrainOptions};
