//! Selected-basis diagonalization of second-quantized electronic Hamiltonians.
//!
//! The pipeline: integrals ([`integrals`]) and a sampled configuration set
//! ([`basis`]) define a Hamiltonian whose elements follow the Slater–Condon
//! rules ([`matelem`]). [`apply`] evaluates `y = H·x` without ever storing the
//! matrix, [`distsim`] runs the same product over simulated ring-connected
//! workers, and [`davidson`] extracts the lowest eigenpairs. [`oracle`] holds
//! the dense reference used for verification.

pub mod apply;
pub mod basis;
pub mod davidson;
pub mod distsim;
pub mod instance;
pub mod integrals;
pub mod linalg;
pub mod matelem;
pub mod oracle;
