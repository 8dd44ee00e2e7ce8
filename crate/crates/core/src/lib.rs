//! Models of two-level-system (TLS) defects coupled to superconducting qubits.
//!
//! The crate covers the perturbative and coherent decay models of a qubit swept
//! through a TLS resonance, synthesis of swap-spectroscopy data, parameter
//! inference with an evolution-strategy trained network, and the Kraus channel of
//! a TLS-afflicted two-qubit gate.
//!
//! Internally every frequency is an angular frequency in rad/ns and every time is
//! in ns. The [`units`] module converts from the GHz/MHz values used at the edges.

pub mod channel;
pub mod coherent;
pub mod error;
pub mod exec;
pub mod fit;
pub mod perturbative;
pub mod pulse;
pub mod quad;
pub mod specfun;
pub mod tssd;
pub mod units;

pub use error::{Error, Result};
pub use exec::Exec;
pub use num_complex::Complex64;
