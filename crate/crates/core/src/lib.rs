//! Compiler and solver for sum-of-squares energies over grids and graphs.
//!
//! An energy is written in a small textual language, lowered to a hash-consed
//! scalar expression DAG, differentiated symbolically, turned into the kernels a
//! Gauss-Newton / Levenberg-Marquardt solver needs, and executed by a register
//! interpreter over grid elements and hyperedges.

pub mod autodiff;
pub mod backend;
pub mod error;
pub mod frontend;
pub mod io;
pub mod ir;
pub mod real;
pub mod simplify;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
pub use real::{Precision, Real};
