//! Training objective and the synthetic capture world it is evaluated on.

mod loss;
mod seqio;
mod world;

pub use loss::{composite_loss, decode, GazeState, LossBreakdown, LossWeights, Predicted};
pub use seqio::Sequence;
pub use world::{
    Frame, SequenceConfig, SurrogateDecoder, SyntheticWorld, GEOMETRY_DIM, RENDER_DIM, TEXTURE_DIM,
};
