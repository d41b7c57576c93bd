//! Scott-Vogelius finite elements for the steady 2D Oseen problem with
//! Galerkin, SUPG and least-squares vorticity stabilizations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod benchmarks;
pub mod error;
pub mod fe_space;
pub mod linsolve;
pub mod mesh;
pub mod quadrature;

pub use error::{Error, Result};
