//! Quantum state transfer through dimerized anisotropic Heisenberg
//! (SSH-XXZ) spin chains: exact diagonalization, transfer amplitudes and
//! fidelities, spectral perfect-transfer search, static disorder averaging,
//! optimal control of the end-to-end transfer and parameter-plane sweeps.

pub mod chain_model;
pub mod disorder_mc;
pub mod error;
pub mod kay;
pub mod krotov;
pub mod propagation;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};

/// Library version, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
