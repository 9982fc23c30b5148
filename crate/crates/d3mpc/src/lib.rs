//! Data-driven distributed MPC of dynamically coupled discrete-time LTI
//! subsystems.
//!
//! The crate stabilises a network of coupled subsystems about the origin
//! using only measured input/output data. Each subsystem predicts its
//! behaviour through Hankel-matrix trajectory parametrisation, solves a
//! local convex program once per step, and communicates a single planned
//! output trajectory to its neighbours per step. Consistency constraints
//! keep each plan close to what was previously communicated; data-driven
//! terminal ingredients (cost, set and controller) are synthesised offline
//! from the same data via an LMI.
//!
//! Module map:
//! - [`signals`]: trajectories, Hankel matrices, persistency of excitation
//! - [`plant`]: ground-truth network used for data generation and actuation
//! - [`behavior`]: model-free trajectory membership and simulation
//! - [`terminal`]: offline terminal-ingredient synthesis and calibration
//! - [`agent`]: one subsystem's local MPC problem and candidate machinery
//! - [`scheme`]: the synchronous distributed closed loop
//! - [`solver`]: conic-solver backend contract and the bundled backend

extern crate openblas_src;

pub mod agent;
pub mod behavior;
pub mod error;
mod linalg;
pub mod plant;
pub mod scheme;
pub mod signals;
pub mod solver;
pub mod terminal;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
