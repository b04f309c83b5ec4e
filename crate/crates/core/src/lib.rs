//! Online power-matching market with flexible customers and uncertain
//! renewable supply, plus a learnable temporal-convolutional matching policy
//! trained by policy gradient.

pub mod checks;
pub mod error;
pub mod market;
pub mod oracle;
pub mod policies;
pub mod scenario;
mod simplex;
pub mod tcn;
pub mod trace;
pub mod trainer;

pub use error::{Error, Result};
