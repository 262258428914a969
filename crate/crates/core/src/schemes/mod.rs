//! Constructive iteration schemes: potential recursion, monotone and
//! Picard iterations, and absorption solves.

mod absorption;
mod iterations;
mod recursion;
mod thresholds;
mod trace;

pub use absorption::{absorption_refinement_sweep, absorption_solve, AbsorptionRun, SweepReport, SweepRow, BUDGET_SLACK};
pub use iterations::{
    exponential_iteration, monotone_source_iteration, picard_subcritical, IterationOutcome, IterationParams,
    NodalBound,
};
pub use recursion::{potential_recursion, RecursionParams};
pub use thresholds::{beta_p, c_p, compute_thresholds, Thresholds};
pub use trace::{IterationRow, IterationTrace, StopReason};
