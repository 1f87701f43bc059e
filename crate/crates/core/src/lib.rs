//! Cell Transmission Model traffic simulation, convex relaxations of the
//! system-optimum dynamic traffic assignment (DTA) and freeway network control
//! (FNC) problems, control synthesis from relaxed optima, and perturbation
//! bounds for the controlled trajectories.
//!
//! Flows are expressed in vehicles per simulation step throughout, so the
//! discrete update `x(t+1) = x(t) + y(t) - z(t)` needs no unit conversion.

// Index loops read closer to the matrix notation in the numeric kernels, and
// `!(a > b)` forms are deliberate: they also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ctm;
pub mod error;
pub mod experiments;
pub mod export;
pub mod io;
pub mod network;
pub mod presets;
pub mod program;
pub mod robustness;
pub mod solver;
pub mod synthesis;

pub use error::{Error, Result};
