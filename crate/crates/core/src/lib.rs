//! Exact-diagonalization laboratory for the free Dirac field on a periodic
//! lattice.
//!
//! The crate is `no_std` (with `alloc`) and contains only numerics: the
//! one-particle operator and its spectral split ([`lattice`]), the fermionic
//! Fock space over position-spin modes ([`fock`]), the charge-based position
//! measures ([`povm`]), time evolution and the Bell-type jump process
//! ([`dynamics`]) and the scripted studies built on top of them
//! ([`experiments`]). File formats and the command-line tool live in the
//! `diracsea` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod experiments;
pub mod fock;
pub mod linalg;
pub mod povm;
pub mod rotation;

pub use error::{Error, Result};
pub use lattice::{build_one_particle, momentum_eigenbasis, LabeledEigenbasis, LatticeSpec, OneParticleSystem};

pub type C64 = num_complex::Complex64;
