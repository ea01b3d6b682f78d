//! Kelvin-Voigt viscoelastic wave equation with a strong time-localized delay.
//!
//! The crate solves
//!
//! ```text
//! y_tt - c1 y_xx - c2 y_xx(t - tau) - d1 y_txx - d2 y_txx(t - tau) = 0   on (0, L)
//! y(t, 0) = 0,  y_x(t, L) = 0 (or a prescribed traction flux)
//! ```
//!
//! with two independent discretizations:
//!
//! * [`modal`]: eigenfunction expansion of the mixed Dirichlet-Neumann Laplacian, one
//!   delayed Crank-Nicolson integrator per mode, driven by the boundary flux computed in
//!   [`neutral_flux`];
//! * [`fd_oracle`]: a second-order finite-difference method of lines with Crank-Nicolson
//!   time stepping and a constant tridiagonal implicit operator.
//!
//! On top of the solvers sit the energy and Lyapunov diagnostics ([`energy`]), the
//! closed-form sufficient stability conditions and region sampler ([`stability`]) and the
//! `tau -> 0` convergence experiment ([`singular_limit`]). [`app`] wires everything into the
//! `viskv` command line tool.
//!
//! All time grids are delay aligned: `dt = tau / N` for an integer `N`, so delayed states are
//! always stored grid values.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod energy;
pub mod exec;
pub mod fd_oracle;
pub mod linalg;
pub mod modal;
pub mod model;
pub mod neutral_flux;
pub mod norms;
pub mod singular_limit;
pub mod stability;

pub use exec::Execution;
pub use model::{Coefficients, FieldGrid, HistoryBuffer, MusclePhysical, StabilityInput};
