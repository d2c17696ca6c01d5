//! Computations on truncated ℓ-Köthe sequence spaces.
//!
//! * [`seqnorm`]: monotone sequence norms, monotonization, coordinate duals.
//! * [`koethe`]: Köthe matrices in log-domain and their graded seminorms.
//! * [`operators`]: operators between truncated spaces and their seminorms.
//! * [`conditions`]: ladder-based checks of the bounded-pair characterization
//!   and of condition S.
//! * [`extractor`]: extraction of a continuous unbounded quasi-diagonal
//!   operator from a continuous unbounded one, with certificates.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conditions;
pub mod expr;
pub mod extractor;
pub mod koethe;
pub mod ladder;
pub mod logmath;
pub mod operators;
pub mod seqnorm;

pub use koethe::{GradedVector, KoetheError, KoetheMatrix, KoetheMatrixSpec};
pub use ladder::{Growth, Ladder};
pub use seqnorm::{CustomNorm, NormError, NormSpec};
