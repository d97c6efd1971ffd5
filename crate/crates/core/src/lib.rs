//! Bass martingales between one-dimensional (and small multidimensional)
//! marginals, computed as the long-time limit of a gradient flow on coupled
//! particle states.

pub mod error;
pub mod flow;
pub mod lifted;
pub mod martingale;
pub mod measures;
pub mod normal;
pub mod oracle;
pub mod ot1d;
pub mod quadrature;
pub mod semidiscrete;

pub use error::{Error, Result};
