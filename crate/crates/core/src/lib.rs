//! Numerical laboratory for completeness of flows, trajectories and geodesics.

pub mod error;
pub mod expr;
pub mod geom;
pub mod growth;
pub mod mechanics;
pub mod ode;
pub mod scenario;
pub mod waves;

pub use error::{Error, Result};
