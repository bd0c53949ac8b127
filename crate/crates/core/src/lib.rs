//! Spray and Finsler geometry at desk scale: exact higher-order
//! derivatives through jet arithmetic, the geodesic spray and its
//! curvature objects, residual evaluation of the Funk equation and the
//! obstruction chain it implies, and a least-squares search for Funk
//! functions over a rational ansatz.

pub mod analysis;
pub mod catalog;
pub mod cli;
pub mod error;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod jets;
pub mod sampling;
pub mod search;

pub use error::{Error, Result};
pub use field::{fd_oracle, ScalarField};
pub use jets::{Jet, PhasePoint};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
