//! 2D biofilm evolution in an aqueous environment on a distributed
//! structured grid.
//!
//! The model couples a modified Cahn-Hilliard equation for the polymer
//! network volume fraction (degenerate mobility, optional Monod production),
//! a nutrient advection-diffusion equation with consumption, and
//! incompressible momentum transport solved by a velocity-correction
//! projection method. All linear systems go through an in-crate
//! stencil-addressed GMRES/Jacobi layer; ranks are worker threads exchanging
//! halos by explicit message passing, so results are reproducible and
//! independent of the decomposition.

pub mod comm;
pub mod driver;
pub mod error;
pub mod flow;
pub mod linsolve;
pub mod mesh;
pub mod operators;
pub mod transport;

pub use driver::{load_config, SimConfig};
pub use mesh::{decompose, Field, GhostPolicy, GridSpec, Subdomain};
