//! Depth-image fusion with a jointly estimated per-pixel confidence.
//!
//! The fused depth `x` and confidence `Λ` minimize a TGV-regularized,
//! confidence-weighted L1 energy with a log-barrier on `Λ`; see [`energy`]
//! for the model and [`solvers`] for the minimization procedures.

pub mod energy;
pub mod error;
pub mod field;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod solvers;

pub use error::{Error, Result};
pub use field::{Grid, GridVector, ScalarField, SymTensorField, VectorField};
