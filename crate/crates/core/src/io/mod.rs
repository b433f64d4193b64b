//! Curve-log ingestion, report serialization and plot-data emission.

pub mod log;
pub mod plot;
pub mod report;

pub use log::{
    parse_log, parse_logs, pretext_series, reduce_target_runs, write_log, LogError, LogErrorKind, LogRecord,
    ReduceError, SeriesKind,
};
pub use plot::emit_plot_data;
pub use report::{write_report, MismatchReport};
