//! Multicore electron-repulsion-integral engine and restricted Hartree-Fock driver.
//!
//! Pipeline: [`block`] builds class-homogeneous quadruple blocks from shell
//! pairs, [`compiler`] lowers each ERI class to a straight-line plan,
//! [`executor`] evaluates plans over blocks into the two-electron Fock term,
//! [`allocator`] tunes per-class task granularity by measurement, and [`scf`]
//! closes the self-consistent loop.

pub mod allocator;
pub mod block;
pub mod boys;
pub mod compiler;
pub mod error;
pub mod executor;
pub mod input;
pub mod reference;
pub mod scf;
pub mod validation;

pub use error::{Error, Result};
