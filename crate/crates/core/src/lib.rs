//! Spacetime lattices of dual-unitary gates.
//!
//! The crate builds brickwork circuits from layered unit cells of
//! dual-unitary gates, decides by symbolic tensor-network rewriting whether the
//! Rényi operator-entanglement network `Z_α` collapses to overlaps of
//! permutation states, derives entanglement line tensions exactly from the
//! worldlines of the SWAP-substituted circuit, and cross-checks every symbolic
//! statement against dense numerical contractions, link invariants and
//! random-matrix statistics.
//!
//! Module map:
//!
//! * [`gates`] – two-site gates, realignment, complex Hadamard matrices.
//! * [`lattice`] – unit cells, the builtin library, worldline tracing.
//! * [`diagram`] – folded diagrams of `Z_α` and the rewrite engine.
//! * [`elt`] – exact entanglement line tensions and derived velocities.
//! * [`defects`] – defect insertion and obstruction catalogue.
//! * [`knots`] – link diagrams, Reidemeister-II unlinking, Kauffman bracket.
//! * [`numeric`] – dense oracles, correlation functions, spectral form factor.

pub mod defects;
pub mod diagram;
pub mod elt;
pub mod error;
pub mod gates;
pub mod knots;
pub mod lattice;
pub mod numeric;
pub mod register;

pub use error::{Error, Result};
