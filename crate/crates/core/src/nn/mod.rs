//! Small dense networks trained with Adam, plus replay memory.

mod adam;
mod mlp;
mod replay;

pub use adam::Adam;
pub use mlp::{gradient_check, sync_target, Dense, ForwardCache, GradCheck, Gradients, Mlp, OutputActivation, SyncMode};
pub use replay::ReplayMemory;
