//! Experiment harness around `orthobo-core`: TOML experiment specs,
//! replicated runs with on-disk traces and aggregates, frozen-surrogate
//! probes, summary reports and step timing.

pub mod bench;
pub mod error;
pub mod experiment;
pub mod probe;
pub mod report;
pub mod spec;

pub use error::{HarnessError, Result};
pub use experiment::{replay, run_experiment, ResultManifest};
pub use probe::{run_probe, ProbeRequest};
pub use report::{build_report, Report, ReportStatus};
pub use spec::ExperimentSpec;
