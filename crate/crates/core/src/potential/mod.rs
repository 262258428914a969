//! Wolff potentials, fractional maximal functions, capacities and the
//! potential bounds built on them.

pub mod calibration;
pub mod capacity;
pub mod checks;
pub mod wolff;

pub use calibration::{Calibration, CalibrationEntry, CALIBRATION_SCHEMA};
pub use capacity::{
    bessel_point_criterion, elliptic_capacity, radial_ball_capacity, CapacityResult,
    CapacitySet, PointCriterion,
};
pub use checks::{
    composition_scaling, constants_stable, delta_zero, exp_integrability_check, potential_power_measure,
    wolff_bound_check, wolff_composition_check, SampleDomain,
};
pub use wolff::{
    dist3, h_eta, lift, maximal_fractional, sphere_fraction, wolff_potential, Point3, PotentialMeasure,
    WolffConfig,
};
