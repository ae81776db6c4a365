//! Operational-risk capital toolkit: severity distributions, compound Poisson
//! loss models, the Standardised Measurement Approach and the studies built on
//! top of them.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod lda;
pub mod numeric;
pub mod opcar;
pub mod regression;
pub mod rng;
pub mod sma;
pub mod special;
pub mod studies;
pub mod table;

pub use error::{OpcapError, Result};
