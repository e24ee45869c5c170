//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod certificates;
pub mod divisors;
pub mod problems;
pub mod series;
pub mod symplectic;
