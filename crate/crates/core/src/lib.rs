//! Cavity-assisted cooling of driven Bose-Hubbard lattices: full Floquet
//! model, time-independent effective model, open-system dynamics and
//! cooling-protocol design.

pub type C64 = num_complex::Complex64;

pub mod cli;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod fockspace;
pub mod model;
pub mod observables;
pub mod protocol;
pub mod sparse;
pub mod tdop;

pub use error::{Error, Result};
