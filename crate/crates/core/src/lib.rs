//! Simulation and key distillation for coherent-state polarization QKD with
//! post-selection.
//!
//! The pipeline runs Alice's four-state preparation through a lossy channel
//! tapped by a beam-splitting eavesdropper, Bob's Stokes measurement and
//! post-selection, basis sifting over a framed classical channel, Cascade
//! error correction and Toeplitz privacy amplification.

pub mod cascade;
pub mod channel;
pub mod experiment;
pub mod info;
pub mod protocol;
pub mod quadrature;
pub mod rng;
pub mod stokes;
pub mod transport;
pub mod wire;
