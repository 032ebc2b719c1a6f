//! Numerical sub-Riemannian geometry on a single chart: horizontal
//! connection, nonholonomic geodesics, commutator-flow steering,
//! broken-geodesic distance estimates and convexity tests.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connection;
pub mod connectivity;
pub mod convexity;
pub mod error;
pub mod expr;
pub mod geodesic;
pub mod geometry;
pub mod models;
pub mod rng;
pub mod structure;
pub mod verify;

pub use error::{Error, EvalError, Result};
pub use expr::{parse_expression, Expr};
pub use geometry::MultiIndex;
pub use structure::{parse_model, StructureSpec};
