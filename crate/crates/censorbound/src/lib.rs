//! File formats, configuration and experiment runners around
//! `censorbound-core`, plus the `censorbound` command-line tool.

pub mod config;
pub mod csv_io;
pub mod error;
pub mod output;
pub mod runners;

pub use config::{Command, ConfigError, RunConfig};
pub use csv_io::{
    load_csv, read_csv, write_csv, CsvSchema, IngestError, IngestSummary, LoadedSample,
};
pub use error::RunError;
pub use output::{Payload, ResultBundle};
pub use runners::{
    dry_run, run, run_confset, run_empirical, run_identify, run_joint, run_montecarlo, run_test,
};
