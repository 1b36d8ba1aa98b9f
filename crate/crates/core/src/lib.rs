//! Quantum and classical Arnol'd diffusion along the coupling resonance of two
//! identical quartic oscillators driven at two commensurate frequencies.

pub mod classical_reference;
pub mod cli_io;
pub mod error;
pub mod floquet_engine;
pub mod linalg;
pub mod quantum_dynamics;
pub mod quartic_oscillator;
pub mod resonance_basis;

pub use error::{Error, Result};
