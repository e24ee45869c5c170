//! Counter-term KAM scheme for resonant lower-dimensional invariant tori.
#![no_std]

// `Float` supplies float math under no_std; with std linked in it goes unused.
#![allow(unused_imports)]

extern crate alloc;

pub mod error;
pub mod fourier_taylor;
pub mod linalg;
pub mod normal_form;
pub mod small_divisors;
pub mod kam_engine;
pub mod symplectic;

pub use error::{KamError, Result};
