//! Fully connected networks with reverse-mode gradients with respect to
//! both parameters and inputs, optional batch normalization, Adam, and
//! checkpoint persistence.

mod adam;
mod checkpoint;
mod network;

pub use adam::{adam_step, AdamState, LrSchedule};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, ExtraInputs, TrainingMeta};
pub use network::{dense_param_count, ForwardCache, Gradients, Network, ParamSet};
