//! Linear instability of gaseous stars with a physical vacuum boundary.
//!
//! The crate computes Lane-Emden equilibria, the growing mode of the
//! linearized Euler-Poisson system around them, and evolves perturbations
//! with the nonlinear Lagrangian dynamics to watch the instability escape.

// `!(x > 0.0)` is deliberate: NaN has to fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod energetics;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod linalg;
pub mod ode;
pub mod output;
pub mod polytrope;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
