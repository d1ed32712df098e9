//! Reduced-basis solver for parametrized frictional contact problems
//! discretized with Nitsche's method.

pub mod bench;
pub mod eim;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod nitsche;
pub mod rom;

pub use error::{Error, Result};
