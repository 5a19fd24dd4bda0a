//! Residual MLP stack with frozen base weights and LoRA adapters.
//!
//! Gradients are derived by hand and cover the adapter factors only.

mod checkpoint;
mod layer;
mod network;
mod optimizer;

pub use checkpoint::{Checkpoint, LayerProvenance, CHECKPOINT_FORMAT};
pub use layer::{flatten_layer, unflatten_layer, Activation, LayerParams, LayerShape, LoraAdapter};
pub use network::{AdapterGrad, AdapterGrads, Batch, ForwardCache, LayeredModel, ModelSpec};
pub use optimizer::{AdamW, OptimizerState};
