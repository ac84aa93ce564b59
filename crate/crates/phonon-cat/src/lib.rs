//! Simulation library for a driven-dissipative two-phonon Jaynes-Cummings
//! system: a spin qubit quadratically coupled to a nanomechanical oscillator
//! placed between two nanomagnets.
//!
//! The crate covers the full pipeline from magnet geometry to measurable
//! signatures:
//!
//! * [`hilbert`] — truncated Fock ⊗ qubit state space and sparse operator algebra,
//! * [`model`] — parameter containers, derived rates, Hamiltonian builders,
//! * [`dynamics`] — Lindblad master-equation evolution and steady states,
//! * [`trajectories`] — Monte-Carlo wavefunction (quantum jump) unfoldings,
//! * [`phase_space`] — Wigner functions, negativity, cattiness, fidelity,
//! * [`magnetics`] — analytic on-axis fields and gradients of cylinder magnets,
//! * [`tomography`] — displaced number measurements and quadrature estimators,
//! * [`cli`] — the experiment harness behind the `phonon-cat` binary.
//!
//! All rates are stored internally in angular units (rad/s); the CLI layer is
//! the only place where ordinary-frequency Hz appear.

pub mod cli;
pub mod dynamics;
pub mod hilbert;
pub mod integrate;
pub mod magnetics;
pub mod model;
pub mod phase_space;
pub mod tomography;
pub mod trajectories;

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncation violation: {0}")]
    Truncation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
