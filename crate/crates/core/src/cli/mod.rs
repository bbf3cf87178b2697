//! File formats and subcommand implementations behind the `wavemap` binary.

pub mod commands;
pub mod output;

pub use commands::{compare, critical_search, fit_scaling, run, static_check, RunSummary, StaticCheck};
pub use output::{read_series, write_series, write_snapshot, SERIES_HEADER};
