//! Spectral laboratory for the Kirchhoff equation
//! `u_tt - Δu (1 + ∫|∇u|²) = 0` on the d-dimensional torus.
//!
//! Everything lives in Fourier coefficient space on a truncated lattice.
//! The crate provides the shell geometry ([`lattice`]), spectral fields and
//! shell observables ([`spectral`]), the physical Hamiltonian flow
//! ([`dynamics`]), the five-stage normal-form chain ([`normal_form`]), the
//! truncated effective shell system ([`effective`]), nonresonance
//! certificates ([`nonres`]) and config-driven experiments ([`experiment`]).

pub mod constants;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod nonres;
pub mod normal_form;
pub mod spectral;

pub use error::{Error, Result};
pub use lattice::{build_lattice, resonant_triples, squarefree_decompose, Lattice, Shell, Triple, TripleSet};
pub use spectral::{ConjugatePair, Field, PhysicalState};

pub type C64 = num_complex::Complex64;
