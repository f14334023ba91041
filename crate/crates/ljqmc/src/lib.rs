//! Quantum Monte Carlo engine for bosonic Lennard-Jones clusters of N atoms
//! in D spatial dimensions: trial-wavefunction optimization, spectral
//! estimation of rotationally invariant states, correlation-function
//! projection, and the exact Grammian transformation behind the
//! D = N-1 / D = N+1 degeneracy.

pub mod cfmc;
pub mod dimsym;
pub mod error;
pub mod geometry;
pub mod hamiltonian;
pub mod harness;
pub mod optim;
pub mod sampler;
pub mod spectral;
pub mod wavefunction;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
