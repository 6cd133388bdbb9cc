//! Lefschetz-thimble quantum Monte Carlo for spin systems.
//!
//! A spin Hamiltonian is mapped onto a spin coherent state path integral
//! over `2 n T` real variables. Sampling happens on the image of the real
//! domain under a regularized holomorphic flow, with the residual phase
//! pushed into reweighting. Plain coherent-state QMC, a z/x-basis path
//! integral QMC, and exact diagonalization serve as comparators.

pub mod action;
pub mod cmatrix;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod flow;
pub mod sampler;
pub mod spin;

pub use error::{Error, Result};
