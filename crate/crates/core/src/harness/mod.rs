//! Experiment orchestration: config, preparation, grids and reports.

mod config;
mod pipeline;
mod report;

pub use config::{
    DataConfig, DataKind, EncoderConfig, EncoderMode, ExperimentConfig, GridConfig, MuMode, OutputConfig,
    ProfileConfig, WeightsConfig,
};
pub use pipeline::{
    data_checksums, load_corpus, prepare, prepare_corpus, sha256_file, Condition, Experiment, PrepareSummary,
    Prepared, PREPARED_DIR, PREPARE_SUMMARY,
};
pub use report::{aggregate_cells, AggregateRow, CellResult, CellStatus, ExperimentReport, Provenance, BASELINE_ALPHA};
