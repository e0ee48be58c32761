//! Experiment orchestration for the polytope laboratory: configuration,
//! seeded trial runners, report aggregation and CSV summaries.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiments::run;
pub use report::{aggregate, summarize, write_atomic, ExperimentReport, Record};
