//! Quantum-trajectory simulation of a continuously monitored free-fermion
//! chain with local feedback.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod circuit;
pub mod engine;
pub mod error;
pub mod fock;
pub mod liouvillian;
pub mod linalg;
pub mod model;
pub mod state;

pub use error::{Error, Result};
pub use linalg::c64;
