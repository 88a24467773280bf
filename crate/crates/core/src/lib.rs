//! Numerical verification lab for a priori bounds on stochastic
//! reaction-diffusion equations with super-linear damping.
//!
//! The crate simulates `(∂_t − Δ)u = −f(u) + g + ζ` on the unit parabolic
//! cylinder, synthesizes rough forcings ζ, computes the parabolic norms the
//! bounds are stated in, and measures left-hand sides against right-hand
//! sides over seeded ensembles. The headline object is the coming-down
//! envelope: sup norms on inner cylinders that hold uniformly over all
//! boundary data.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod field;
pub mod geometry;
pub mod io;
pub mod kernel;
pub mod noise;
pub mod nonlin;
pub mod norms;
pub mod solver;


pub use error::{Error, Result};

pub use field::ScalarField;
pub use geometry::{Cylinder, GridBox, ParabolicBall, Point, SpaceTimeGrid};


