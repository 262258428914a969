//! Discrete parabolic and elliptic solvers.

pub mod banded;
pub mod grid;
pub mod newton;
pub mod operator;
pub mod radial;
pub mod field;
pub mod step;
pub mod weak;

pub use field::{SolveReport, SpaceTimeField};
pub use grid::{Grid, GridSpec, Point};
pub use newton::NewtonParams;
pub use operator::{AbsorptionSpec, OperatorSpec};
pub use step::{implicit_step, solve_elliptic, solve_parabolic, SliceLoad, SolveOptions};
