//! Projective purification of reduced density matrices, with a TD2RDM
//! propagator for quench dynamics of the one-dimensional Fermi-Hubbard model
//! and an exact-diagonalization reference.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod hubbard;
pub mod matcore;
pub mod oracle;
pub mod purifier;
pub mod reconstruct;

pub use error::{Error, Result};
