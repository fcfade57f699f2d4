//! Constructive unique-continuation checks for 2D anisotropic elasticity when the
//! first displacement component vanishes near a point.
//!
//! The crate is organised along the computation:
//!
//! * [`field`]: closed-form coefficient expressions with symbolic derivatives.
//! * [`tensor`]: the elasticity coefficients and their structural conditions.
//! * [`reduction`]: the hyperbolic/elliptic pair satisfied by `u2`.
//! * [`characteristics`]: characteristic coordinates and the transformed pair.
//! * [`riemann`]: Riemann functions, the representation formula and Volterra IVPs.
//! * [`nullspace`]: discrete solution-space dimension of the pair.
//! * [`pipeline`]: scenarios, the end-to-end run and its report.

pub mod characteristics;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod nullspace;
pub mod pipeline;
pub mod reduction;
pub mod riemann;
pub mod scenario_file;
pub mod tensor;

pub use error::{Error, Result};
pub use field::ScalarField;
