//! Simulation and fitting toolkit for microwave single-layer preparation of a
//! two-spin Fermi gas in a vertical optical lattice.
//!
//! The crate is organised by subsystem:
//!
//! * [`fieldmap`]: quadrupole + bias field model, Zeeman transition
//!   frequencies and per-layer detunings.
//! * [`passage`]: HS1 adiabatic pulses and a unitary two-level integrator.
//! * [`protocol`]: the five-step A–E preparation sequence on a per-layer
//!   population grid, layer scans and layer matching.
//! * [`dynfit`]: two/three-body loss integration, half-life calibration,
//!   fringe fits and the shared Nelder–Mead minimizer.
//! * [`specimg`]: spectral images of transverse field inhomogeneity, stripe
//!   analysis and shim compensation.

pub mod dynfit;
pub mod error;
pub mod fieldmap;
pub mod passage;
pub mod protocol;
pub mod specimg;

pub use error::{Error, Result};
