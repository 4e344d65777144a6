//! Numerical Lorentz–Finsler geometry.
//!
//! Everything is derived from a Lagrangian `L(x, v)` evaluated over truncated
//! Taylor jets: the fundamental tensor, the spray and connections, geodesics,
//! Jacobi tensors, (weighted) curvature, and quadrature-based checks of volume
//! comparison inequalities on star-shaped sets in the future cone.

pub mod cli;
pub mod comparison;
pub mod connection;
pub mod curvature;
pub mod error;
pub mod geodesics;
pub mod jacobi;
pub mod jets;
pub mod linalg;
pub mod model;
pub mod ode;

pub use error::{Error, Result};
pub use jets::{Jet, JetSpace, Scalar};
pub use model::{FinslerModel, ModelSpec, ScaleFactor, WeightSpec};
