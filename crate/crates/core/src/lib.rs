//! Laplace self-force on toroidal current sheets, and force-aware
//! optimization of surface current potentials.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: Fourier surfaces, grids, normals, curvature, tangential calculus.
//! * [`currents`]: divergence-free sheet currents from a current potential.
//! * [`magnetics`]: Biot-Savart field of a sheet and the normal-field objective.
//! * [`force`]: closed-form Laplace force and the finite-offset semi-sum it replaces.
//! * [`costs`]: regularizers, force costs, and the composite objective with its gradient.
//! * [`optimize`]: preconditioned nonlinear conjugate gradient, weight scans, and case runs.
//!
//! All quantities are SI. The Biot-Savart prefactor `mu0 / 4 pi` is always
//! applied, so fields are in tesla and forces per unit area in pascal.

pub mod costs;
pub mod currents;
pub mod error;
pub mod force;
pub mod geometry;
pub mod magnetics;
pub mod optimize;
pub mod problem;

pub use costs::{CostBreakdown, ForceMetric, Objective, ObjectiveSpec};
pub use currents::{CurrentBasis, CurrentPotential, SurfaceCurrent};
pub use error::{Error, Result};
pub use force::{EpsilonProbe, ForceField, SingularQuadrature};
pub use geometry::{DiffMethod, FourierMode, FourierSurface, ParametricSurface, SurfaceGrid};
pub use magnetics::{FieldSample, PlasmaBoundary};
pub use optimize::{OptimizerConfig, RunRecord, StopReason};
pub use problem::Problem;

/// Ambient 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// `mu0 / 4 pi` (H/m).
pub const MU0_OVER_4PI: f64 = MU_0 / (4.0 * std::f64::consts::PI);
