//! Discrete Darboux and Bäcklund machinery for q-difference Riccati equations
//! and the associated 2×2 linear q-difference systems.
//!
//! Functions live on a geometric lattice `x_i = base·q^i`, `i = 0..=N`; the
//! bottom point `x_N` stands in for the origin in every Jackson integral and
//! infinite product.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backlund;
pub mod classic;
pub mod darboux;
pub mod error;
pub mod exprdsl;
pub mod linsys;
pub mod qlattice;

pub use error::{Error, Result};
pub use qlattice::{LatticeFn, QGrid};
