//! Experiment runner for prototype-based few-shot classification: config
//! parsing, intra- and cross-domain grids, result files, embedding dumps.

pub mod config;
pub mod error;
pub mod export;
pub mod grid;
pub mod output;
pub mod report;

pub use config::{DatasetConfig, DatasetSource, ExperimentConfig, Mode, RawConfig};
pub use error::{CliError, Result};
pub use export::{export_embeddings, render_embeddings};
pub use grid::{
    load_dataset, load_domain, load_domains, run_cross_domain, run_grid, run_grid_on, run_intra_domain, Domain,
    GridOutput, ResultRow, ResultTable, TrainedModel,
};
pub use output::{read_table, read_table_csv, read_table_json, write_results, WrittenFiles};
