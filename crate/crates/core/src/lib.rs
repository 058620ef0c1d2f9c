//! Numerical laboratory for dissipative flows on constraint manifolds whose
//! induced form is degenerate.
//!
//! The crate is `no_std` (it needs `alloc`). IO, configuration and the command
//! line live in the `nullfold` companion crate.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Float methods come from num-traits without std. Builds that link std see
// the inherent methods instead, so those imports carry `allow(unused_imports)`.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diff;
pub mod dissipation;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
#[cfg(test)]
mod oracle;
pub mod poly;
pub mod reduction;
pub mod spectral;
pub mod systems;

pub use error::{Error, Result};
pub use geometry::{AmbientSpace, Constraint, Manifold, TangentSplitting};
pub use dynamics::{IntegrationOptions, Trajectory, VectorField};
pub use dissipation::FunctionalSpec;
pub use reduction::{AttractorEstimate, Foliation, ReducedTrajectory};
pub use systems::Example;

pub use nalgebra::{Complex, DMatrix, DVector};
