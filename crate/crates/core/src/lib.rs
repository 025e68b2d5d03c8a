//! Searchable multi-view avatar encoders and latent extrapolation at inference.

pub mod cost;
pub mod error;
pub mod latex;
pub mod objective;
pub mod search;
pub mod supernet;
pub mod tensor;

pub use error::{Error, Result};
