//! Numerical laboratory for quasilinear parabolic equations
//! `u_t - div A(x, grad u) + G(u) = mu` with measure data.

pub mod error;
pub mod exponents;
pub mod expr;
pub mod lab;
pub mod measures;
pub mod potential;
pub mod schemes;
pub mod serde_ext;
pub mod solver;
pub mod testfns;
pub mod truncation;

pub use error::{Error, Result};
