//! The two-stream network, whole-image prediction and checkpoints.

mod checkpoint;
mod config;
mod network;
mod predict;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, load_checkpoint_for, save_checkpoint, MAGIC, VERSION,
};
pub use config::{ModelConfig, Variant, POOLED_BLOCKS};
pub use network::{ConvBlock, ForwardCache, Gradients, Mode, Model, ParamRef, Stream};
