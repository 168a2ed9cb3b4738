//! Nonlinear drift-diffusion with measure forcing.
//!
//! `u_t - Δu^m + div(uV) = μ` on a box, solved with an explicit conservative
//! finite-volume scheme; tools to classify drift exponents against the
//! scaling classes, and to evaluate both sides of the a priori estimates on
//! computed trajectories.

// parameter guards are written `!(x > a)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod config;
pub mod drift;
pub mod estimates;
pub mod fluid;
pub mod grid;
pub mod io;
pub mod measure;
pub mod norms;
pub mod runner;
pub mod solver;
pub mod sum;

pub use grid::{Boundary, FaceField, GridError, ScalarField, SpaceTimeDomain};
pub use norms::{Exponent, ExponentPair, GradientFunctionalParams};
