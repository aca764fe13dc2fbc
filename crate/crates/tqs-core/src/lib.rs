//! Desk-scale simulator of ancilla-free tailored-quench spectroscopy (TQS).
//!
//! The protocol reconstructs two-point correlators C(A,B,t) = Tr[ρ A B(t)]
//! of parity-symmetric Hamiltonians ([H,P] = 0, {A,P} = {B,P} = 0) from
//! expectation values of simple quenched evolutions — no ancilla qubit, no
//! controlled multi-qubit gates. Frequencies of the reconstructed series are
//! then extracted with MUSIC and assembled into the Lehmann (pole/weight)
//! form of the Green's function.
//!
//! Everything is dense linear algebra over `Complex64` (target dimensions
//! d ≤ 2^14, matching the regimes the protocol is designed for), and every
//! reconstruction identity is validated against brute-force oracles in the
//! test suite.

/// Crate version, re-exported so downstream tools can echo it into
/// provenance records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod error;
pub mod evolution;
pub mod greens;
pub mod linalg;
pub mod models;
pub mod music;
pub mod operators;
pub mod quench;
pub mod states;

pub use error::{CoreError, Result};
