//! Finite-volume simulation and numerical certification for the
//! chemotaxis-consumption system and its saturated regularization
//!
//! ```text
//! u_t = lap u - div( u / (1 + eps u)^2 * grad v )
//! v_t = lap v - u v / (1 + eps u)
//! ```
//!
//! with homogeneous Neumann data on an interval, a rectangle or an annulus.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod inequality;
pub mod initial;
pub mod par;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{make_grid, Geometry, Grid, Resolution, ScalarField};
