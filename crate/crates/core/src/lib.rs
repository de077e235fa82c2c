//! Preferential Bayesian optimization from pairwise comparisons.
//!
//! The optimizer never sees function values. Each step it proposes a point,
//! asks an oracle whether that point beats the previous one, and keeps a
//! likelihood-ratio confidence set over functions in an RKHS ball. The next
//! query maximizes the optimistic advantage over the previous query across
//! that set.

pub mod bench;
pub mod domain;
pub mod error;
pub mod instances;
pub mod interpolant;
pub mod kernel;
pub mod likelihood;
pub mod preference;
pub mod search;
pub mod session;
pub mod solver;

pub use error::{Error, Result};
