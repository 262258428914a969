//! Stability experiments, experiment configs, report emission and the
//! command runners behind the `plm` binary.

pub mod commands;
pub mod config;
pub mod report;
pub mod stability;

pub use commands::{run_command, Command, Outcome};
pub use report::{emit_report, stability_csv, STABILITY_HEADER};
pub use stability::{
    build_perturbation_family, run_stability_experiment, Hypotheses, PerturbationFamily, StabilityReport,
    StabilityRow, StabilitySettings, REPORT_SCHEMA,
};
