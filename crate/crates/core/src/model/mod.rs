//! The three-stage multi-task network and its ablation variants.

mod checkpoint;
mod config;
mod forward;
mod params;

use thiserror::Error;

use crate::nn::NnError;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{build_variant, layer_shapes, ArchConfig, HeadFcInput, HeadShape, StackShape, Variant, Wiring};
pub use forward::{backward, forward, predict, stack_lanes, Batch, BatchOutput, ForwardCache};
pub use params::{init_params, zeros_for, HeadParams, ModelParams, StateAdapter};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidConfig(String),
    #[error("unknown variant `{0}` (expected full, no_shared, no_heads or no_concat)")]
    UnknownVariant(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}; training has diverged")]
    NonFinite(&'static str),
    #[error("stale cache: {0}")]
    StaleCache(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
