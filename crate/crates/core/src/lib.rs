//! Finite-difference evolution of the 2+1 equivariant wave map into the
//! 2-sphere, written in the extrinsic (embedded) formulation.
//!
//! Two time integrators are provided: classical RK4 on the free system where
//! the Lagrange multiplier has been eliminated, and Rattle, which projects
//! positions and velocities back onto the constraint manifold every step.
//! The diagnostics and analysis modules measure constraint drift, energy
//! balance, the blow-up scaling function and the critical amplitude.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod model;
mod par;

pub use config::{Method, RunConfig};
pub use error::{Error, Result};
pub use grid::{Axis, Domain, Grid2D, Order, Parity, ScalarField};
pub use model::{FieldState, InitialDataParams, Pole};
