//! Dataset ingestion, experiment configs and result files.

mod config;
mod ml100k;
mod results;

pub use config::{load_config, OneOrMany, StudyConfig, DEFAULT_EXPERIMENT_ID, DEFAULT_TRIALS};
pub use ml100k::{load_ml100k, parse_ml100k, IdMapping, RatingDataset};
pub use results::{
    correlations, fmt_real, read_summary, write_atomic, write_report, write_results, write_tuning, CorrelationRow,
    ResultFiles, SummaryRow, OFFLINE_COLUMNS, TIMESERIES_COLUMNS, TUNING_COLUMNS,
};
