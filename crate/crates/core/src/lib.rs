//! Pseudo-spectral toolkit for fractional Sobolev quotients on periodic boxes:
//! the sharp constant and its extremal bubbles, maximizers of the subcritical
//! functional on bounded domains, and diagnostics for concentration as the
//! exponent approaches the critical one.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod extremals;
pub mod solver;
pub mod spaces;
pub mod spectral;

pub use error::{Error, Result};
pub use extremals::{critical_exponent, sobolev_constant};
pub use spaces::{DomainMask, ExponentPack, Shape};
pub use spectral::{make_grid, Field, Grid};
