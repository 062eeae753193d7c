//! Configured end-to-end runs: presets, analysis and file output.

pub mod config;
pub mod output;
pub mod report;
pub mod run;

pub use config::{RunConfig, Scenario};
pub use output::{write_outputs, write_series, WrittenFiles};
pub use report::ExperimentReport;
pub use run::{analyze_domains, analyze_grating, execute, run_custom, run_grating, run_tunneling, RunOutput, Simulation};
