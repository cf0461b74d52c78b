//! Desk-scale stochastic optimization with a logarithmic warm-restart step
//! size, the decay schedules it is compared against, and numeric checks of
//! the convergence bounds that motivate it.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod optimizer;
pub mod problems;
pub mod sampling;
pub mod schedules;
pub mod trace;

pub use error::{Error, Result};
