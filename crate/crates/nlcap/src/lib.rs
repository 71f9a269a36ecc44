//! Nonlinear `A = ∇f` capacities of convex bodies.
//!
//! The library solves the exterior capacitary problem for degenerate elliptic
//! operators of p-Laplace type on truncated Cartesian grids, extracts the
//! capacitary surface measure of polytopes, verifies the Brunn-Minkowski
//! inequality and the Hadamard variational formula at desk scale, and solves
//! the discrete Minkowski problem for these capacities by constrained
//! minimization.
//!
//! Module map:
//! * [`structure`] - the nonlinear structure `A = ∇f`, its validation, and the
//!   closed-form anisotropic fundamental solution via support-function duality.
//! * [`convex`] - convex bodies: halfspace polytopes, balls, Minkowski
//!   combinations, support functions, Gauss faces, Hausdorff distance.
//! * [`pde`] - the exterior Dirichlet solver and capacity estimates.
//! * [`measure`] - capacitary surface measures and weak-convergence probes.
//! * [`minkowski`] - the discrete Minkowski problem solver.
//! * [`bm`] - Brunn-Minkowski / Hadamard / capacity-law experiment harness.

pub mod bm;
pub mod convex;
pub mod error;
pub mod fundsol;
pub mod geom;
pub mod measure;
pub mod minkowski;
pub mod pde;
pub mod quadrature;
pub mod structure;

pub use error::Error;

/// Library-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
