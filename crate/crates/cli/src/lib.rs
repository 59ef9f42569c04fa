//! Configuration, validation and artifact emission for the `cpafdm` runner.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod validate;

pub use config::{Experiment, ExperimentConfig, OutputFormat, WaveformSpec};
pub use error::{CliError, CliResult};
pub use output::{Cell, Table};
pub use run::{compute, run, Manifest, RunSummary};
pub use validate::{validate, Diagnostic, Severity};
