//! Constrained trajectory optimization for robust, decoherence-aware control
//! pulses on a flux-driven two-level qubit.
//!
//! The crate is organized bottom-up:
//!
//! - [`quantum`]: real-isomorphic states and operators, the qubit Hamiltonian,
//!   exact propagators and fidelities.
//! - [`dynamics`]: the discrete dynamics of the augmented state (flux chain,
//!   quantum states, sensitivities, samples, integrated depolarization) and
//!   its Jacobians.
//! - [`solver`]: iLQR, the augmented Lagrangian outer loop and the projected
//!   Newton polishing stage.
//! - [`problems`]: assembly of gate problems and their robustness,
//!   depolarization and time-optimal augmentations.
//! - [`noise`]: flux-dependent T1 interpolation and 1/f flux noise.
//! - [`evaluation`]: independent scoring of pulses (Lindblad depolarization,
//!   detuning, flux noise, cumulative errors).
//! - [`io`]: pulse, trajectory and report file formats.

pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod noise;
pub mod problems;
pub mod quantum;
pub mod solver;

pub use error::{Error, Result};
pub use quantum::{FluxoniumParams, GateKind, GateTarget, QuantumState, RealIsoMatrix};
