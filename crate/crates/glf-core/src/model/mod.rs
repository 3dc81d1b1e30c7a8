//! Encoders, projection heads, the frozen prior encoder, SGD, and
//! checkpointing.

mod checkpoint;
mod mlp;
mod optim;
mod prior;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{init_mlp, Activation, FinalActivation, MlpParams, MlpSpec, MlpVars};
pub use optim::{CosineSchedule, OptimizerState};
pub use prior::{PriorEncoder, PriorEncoderSpec, PriorKind};
