//! Mixed finite element laboratory for the two-dimensional Stokes problem:
//! Taylor–Hood discretization, regularized Green's functions, weighted and
//! dyadic norms, and experiments measuring max-norm stability.

pub mod basis;
pub mod cutoff;
pub mod error;
pub mod greens;
pub mod geometry;
pub mod mesh;
pub mod norms;
pub mod quadrature;
pub mod regularization;
pub mod report;
pub mod sparse;
pub mod space;
pub mod stokes;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::{Domain, Point};
pub use mesh::Mesh;
