//! Experiment orchestration: configuration, the cached stage pipeline,
//! result tables and throughput measurement.

pub mod config;
pub mod pipeline;
pub mod results;
pub mod throughput;

pub use config::{EvalConfig, ExperimentConfig, OutputConfig};
pub use pipeline::{
    standard_tables, Data, Manifest, Pipeline, RunOutputs, SeedModels, TimingRow, Variant,
};
pub use results::{
    ablation_table, read_results, write_results, AblationTable, Metric, ResultRow, TableRequest,
};
pub use throughput::{throughput_report, ThroughputRow};
