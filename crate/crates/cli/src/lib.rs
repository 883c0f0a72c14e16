//! Command-line harness around `blockopt-core`: problem files, trace CSVs,
//! certificate reports and the brute-force oracles.

pub mod app;
pub mod certify;
pub mod error;
pub mod oracle;
pub mod report;
pub mod spec;
pub mod trace_io;

pub use error::{CliError, CliResult, Status};
