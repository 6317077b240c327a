//! Simulation library for a driven-dissipative two-site Kerr dimer.
//!
//! Covers truncated Fock-space operators, the Lindblad Liouvillian and its
//! stationary state and slow spectrum, quantum observables, mean-field
//! (Gross–Pitaevskii) fixed points and limit cycles, and truncated-Wigner
//! stochastic dynamics.

pub mod dense;
pub mod error;
pub mod fit;
pub mod fock;
pub mod gp;
pub mod krylov;
pub mod model;
pub mod observables;
pub mod rk4;
pub mod spectrum;
pub mod steady;
pub mod twa;

pub use error::{DimerError, Result};
