//! Round-synchronous swarm simulator for virtual-particle-exchange
//! localization: robots repeatedly trade a conserved scalar with their
//! neighbors under a direction-biased rule, and the equilibrium amounts
//! encode their coordinates. The crate covers the matrix-form iteration, a
//! sensing-only variant that needs no robot-to-robot communication, a
//! spectral ground-truth oracle, distributed total-amount calibration, and a
//! potential-field shape-formation controller on top — plus an experiment
//! harness that reproduces the simulation studies from config files.
//!
//! Start from the `examples/` directory: each example is a runnable tour of
//! one capability.

pub mod error;
pub mod formation;
pub mod harness;
pub mod optical;
pub mod plot;
pub mod report;
pub mod spectral;
pub mod swarm;
pub mod vec2;
pub mod vpe;

pub use error::{Error, Result};
