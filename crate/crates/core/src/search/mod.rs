mod engine;
mod optim;
mod policy;
mod train;

pub use engine::*;
pub use optim::*;
pub use policy::*;
pub use train::*;
