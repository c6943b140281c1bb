//! Fixed-total-momentum Fröhlich polaron on a truncated Fock space.
//!
//! The crate discretizes the phonon momentum ball into Cartesian cells,
//! enumerates the occupation-number basis up to a boson cap, assembles
//! the sparse stoquastic fiber Hamiltonian and computes its ground state.
//! The [`cone`] module checks operator-order statements on the
//! coordinate-orthant cone, and [`sweep`] drives parameter sweeps and the
//! energy-monotonicity verifications.

pub mod cone;
pub mod eigen;
pub mod error;
pub mod fock;
pub mod grid;
pub mod hamiltonian;
pub mod quadrature;
pub mod report;
pub mod sparse;
pub mod sweep;

pub use error::{Error, Result};
pub use report::Report;
