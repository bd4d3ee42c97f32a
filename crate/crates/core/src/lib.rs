//! Numerical laboratory for duality estimates of parabolic equations and
//! reversible mass-action reaction-diffusion systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: cell-centred Neumann grids, the discrete Laplacian and L^p norms;
//! * [`solver`]: direct and preconditioned implicit diffusion solves;
//! * [`heat`]: forward/backward heat solvers and empirical regularity constants;
//! * [`reaction`]: mass-action networks and IMEX time integration;
//! * [`equilibrium`]: detailed-balance equilibria under conservation laws;
//! * [`estimates`]: closed-form constants, smallness conditions and exponent recursions;
//! * [`experiments`]: end-to-end drivers producing reports.

pub mod equilibrium;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod grid;
pub mod heat;
pub mod reaction;
pub mod solver;

pub use error::{Error, Result};

/// Version of the library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
