//! Manifests, experiment configuration, ten-fold orchestration, sweeps and
//! reports.

mod config;
mod experiment;
pub mod manifest;
mod report;
mod sweep;

pub use config::ExperimentConfig;
pub use experiment::{
    bundle_path, clip_features, clip_mfccs, run_experiment, run_experiment_observed, summarize,
    train_fold_gmm, CategoryResult, EventResult, LineageObserver, LineageStage, Metadata, NoLineage,
    ResultsBundle, Selection,
};
pub use manifest::{load_manifest, DatasetKind, Manifest, ManifestRow, FOLD_COUNT};
pub use report::{fuse_bundles, write_fusion, write_report, FusionResult};
pub use sweep::{compatible, sweep, table, Metric, MetricTable, SweepCell, SweepGrid};
