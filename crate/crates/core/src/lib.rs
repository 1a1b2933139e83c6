//! Selfdual variational solvers for the incompressible Navier-Stokes
//! equations on the periodic torus.
//!
//! Trajectories are found by minimizing a nonnegative functional built from
//! antiselfdual Lagrangians: its minimum is zero exactly on solutions, so the
//! final value certifies the result. The crate layers convex potentials and
//! their conjugates ([`convex`]), Lagrangian algebra ([`lagrangian`]),
//! temporal boundary conditions ([`boundary`]), spectral fields ([`field`]),
//! the discretized functional ([`functional`]) and its minimizer
//! ([`optimizer`]), with an independent time-stepping reference ([`oracle`]).
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod convex;
pub mod error;
pub mod extended;
pub mod field;
pub mod format;
pub mod functional;
pub mod lagrangian;
pub mod optimizer;
pub mod oracle;
pub mod scenario;
pub mod verify;
pub(crate) mod linalg;

pub use error::{Error, Result};
pub use extended::ExtendedReal;
