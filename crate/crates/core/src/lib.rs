//! Globally-optimal camera pose and 2D-3D correspondence estimation.
//!
//! The camera pose `(r, t)` (angle-axis rotation, camera centre) is found by
//! maximising the number of bearing vectors that lie within an angular
//! threshold of some transformed 3D point. The search is a nested
//! branch-and-bound: an outer search over translation cuboids and an inner
//! search over rotation cubes inside the radius-pi ball, with local PnP
//! refinement to raise the incumbent.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the CLI and the
//! synthetic generator use.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod scalar;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3d = geometry::Vec3<f64>;
pub type Bearingd = geometry::Bearing<f64>;
pub type RotationVecd = geometry::RotationVec<f64>;
pub type RotationMatrixd = geometry::RotationMatrix<f64>;
pub type Posed = geometry::Pose<f64>;
pub type Intrinsicsd = geometry::Intrinsics<f64>;
pub type Cuboidd = domain::Cuboid<f64>;
pub type TranslationDomaind = domain::TranslationDomain<f64>;
pub type ProblemInstanced = bounds::ProblemInstance<f64>;
pub type SolverConfigd = solver::SolverConfig<f64>;
pub type Solutiond = solver::Solution<f64>;

pub type Vec3f = geometry::Vec3<f32>;
pub type Posef = geometry::Pose<f32>;
pub type ProblemInstancef = bounds::ProblemInstance<f32>;
