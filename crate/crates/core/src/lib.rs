//! Quantum noise workbench for the above-threshold optical parametric
//! oscillator: linearized output spectra, positive-P stochastic integration,
//! spectral estimation, inseparability tests and analysis-cavity readout.

pub mod cavity;
pub mod csvout;
pub mod error;
pub mod linear;
pub mod model;
pub mod sde;
pub mod spectrum;
pub mod workbench;

pub use error::{Error, Result};
