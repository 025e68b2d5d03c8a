//! Adaptive latent extrapolation at inference time.

mod runtime;
mod simulate;
mod window;

pub use runtime::*;
pub use simulate::*;
pub use window::*;
