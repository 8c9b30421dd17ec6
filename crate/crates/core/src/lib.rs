//! Adiabatic Markovian dynamics.
//!
//! Lindblad generators and their propagation, automatic discovery of the
//! noiseless-subsystem decomposition of a generator, the generalized gap
//! and effective Hamiltonians of adiabatic open-system evolution, and
//! dissipation-driven holonomic gates.

pub mod adiabatic;
pub mod error;
pub mod holonomy;
pub mod lindblad;
pub mod numerics;
pub mod presets;
pub mod random;
pub mod structure;

pub use error::{Error, Result};
pub use numerics::{Operator, C64};
