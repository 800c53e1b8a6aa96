//! Coupled Galton-Watson processes indexed by a growth parameter.
//!
//! A coupling model gives, for every `λ` in an interval, an offspring law of
//! mean `λ` with offspring monotone in `λ`. The crate simulates the resulting
//! process of processes on a finite grid, computes moments of the limiting
//! martingales exactly through the partition calculus, iterates the
//! characteristic-function fixed point and runs diagnostics on the
//! assumptions that make the limit continuous in `λ`.

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod fixedpoint;
pub mod forest;
pub mod partition;
pub mod scalar;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
