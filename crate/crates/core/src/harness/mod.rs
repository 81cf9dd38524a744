//! Experiment configuration, checkpoints, batch runs and data exports.

mod batch;
mod checkpoint;
mod config;
mod export;

pub use batch::{log_path, metrics_from_logs, run_batch, run_seed, BatchReport, FAILURES, LOG_DIR, METRICS_CSV, METRICS_JSON};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{load_config, parse_config, preset, preset_names, ExperimentConfig, ReplayFlags, OUT_ENV};
pub use export::{
    export_curves, feature_batches, pca_project, policy_features, FeatureBatch, FeatureSource, PcaProjection,
    ProjectedPoint, CURVE_HEADER,
};
