//! Numerical toolkit for degenerate hyperbolic systems of hanging-string
//! type: weighted norms, a cell-centered discretization, implicit time
//! stepping with a localized boundary term, and the tension problem.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bessel;
pub mod bvp;
pub mod compat;
pub mod discmap;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod family;
pub mod linalg;
pub mod mesh;
pub mod norms;
pub mod string;

pub use error::{Error, Result};
pub use mesh::{boundary_deriv, boundary_value, derivative, integrate_weighted, make_mesh, GridFn, Mesh};
