//! Numerical solver and diagnostics for the pluriclosed flow of
//! generalized Kähler structures of symplectic type on a flat 4-torus.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod experiments;
pub mod grid;
pub mod identities;
pub mod monitors;

pub use error::{Error, Result};
