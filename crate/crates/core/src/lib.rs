//! Random walks in weak space-time random environments.
//!
//! The crate evaluates, at desk scale, the objects that connect a random walk
//! in a `√ε`-weak random environment to the stochastic heat equation:
//! exact transition probabilities by dynamic programming, the polynomial
//! chaos expansion of those probabilities, sharp large-deviation asymptotics
//! of the simple random walk, an explicit solver for the limiting SHE, and
//! contour-integral moment formulas for the Beta polymer.
//!
//! Everything that can underflow lives in the log domain. Random fields are
//! counter-based, so a value depends only on `(seed, i, j)`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod environment;
mod error;
pub mod harness;
pub mod ldp;
pub mod logspace;
pub mod moments;
pub mod quadrature;
pub mod rwre;
pub mod scaling;
pub mod she;
pub mod stats;

pub use error::{Error, Result};
