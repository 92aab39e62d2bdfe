//! Extracavity vacuum radiation from a single qubit in a cavity whose vacuum
//! Rabi coupling is harmonically modulated.
//!
//! The open-system dynamics is a second-order time-convolutionless master
//! equation with colored (step-function) dissipation baths. Steady-state
//! two-time correlations of the cavity field give the intracavity spectrum,
//! the filtered extracavity emission spectrum and the total emission rate.
//!
//! Conventions: ħ = 1, frequencies and rates are in units of the cavity
//! frequency, and the bare basis is `|n⟩ ⊗ |g/e⟩` with the qubit index
//! fastest (`index = 2 n + q`).

pub mod analysis;
pub mod bath;
pub mod cli;
pub mod correlations;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod superop;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Dense complex matrix on the truncated Fock ⊗ qubit space.
pub type Operator = ndarray::Array2<C64>;
