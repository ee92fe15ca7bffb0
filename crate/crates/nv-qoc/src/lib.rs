//! Quantum optimal control and sensing for NV-center spin systems.
//!
//! The crate covers the pipeline from Hamiltonian assembly to optimized
//! pulses and sensing analysis:
//!
//! - [`spinsys`]: spin operators, NV ground-state and coupling Hamiltonians,
//!   the rotating-frame qubit reduction.
//! - [`propagate`]: piecewise-constant pulses and exact slice-wise evolution.
//! - [`costs`]: terminal and running cost functionals, Fisher information,
//!   control-value mappings.
//! - [`grape`]: exact-gradient pulse optimization with line search.
//! - [`crab`]: randomized-basis gradient-free pulse optimization and its
//!   superiteration variant.
//! - [`sensing`]: pulsed sensing sequences, filter functions, photon readout
//!   statistics and sensitivity.
//! - [`limits`]: quantum speed limit and controllability diagnostics.
//!
//! Unit conventions, fixed across the crate: hbar = 1, energies are angular
//! frequencies in rad/us, time in us, magnetic fields in mT, electric fields
//! in V/m.

pub mod costs;
pub mod crab;
pub mod error;
pub mod grape;
pub mod limits;
pub mod linalg;
pub mod propagate;
pub mod report;
pub mod sensing;
pub mod spinsys;

pub use error::{Error, Result};
