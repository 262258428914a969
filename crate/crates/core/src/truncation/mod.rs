//! Truncation functions, time averages and a priori estimate diagnostics.

mod averages;
mod diagnostics;
mod family;

pub use averages::{landes_approx, steklov_average, Direction};
pub use diagnostics::{
    decreasing_rearrangement, gradient_level_measure, level_measure, levelset_decay, loglog_fit,
    nodal_rearrangement, singular_flux, tail_check, truncated_energy, EstimateReport, FluxValue,
    LevelTarget, Rearrangement,
};
pub use family::Truncation;
