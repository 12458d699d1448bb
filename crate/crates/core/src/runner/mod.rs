//! Experiment runner: config handling, the shared data/encoder/decomposition
//! preparation, strategy sweeps and their output files, and cross-run
//! comparison tables.
//!
//! A run directory holds `manifest.json`, `metrics.csv`, `stage_log.csv`,
//! `curves.csv`, `results.json`, `encoder.json`, `decomposition.json` and
//! per-strategy `schedules/`, `checkpoints/` and `results/`.

mod compare;
mod config;
mod pipeline;
mod report;

pub use compare::{compare, ComparisonRow, ComparisonTable};
pub use config::{DatasetSource, RunConfig, SeedPlan, Strategy, StrategyName};
pub use pipeline::{
    decompose, decompose_only, encode_all, encode_only, load_dataset, obtain_encoder, prepare_data, run, LatentRecord,
    PreparedData, RunManifest, RunOutcome, StrategyEntry, MANIFEST_FILE,
};
pub use report::{metrics_rows, FittedCurve, StrategyResults, METRICS_HEADER, METRIC_NAMES};
