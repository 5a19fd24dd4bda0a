//! Simulator for developmental (stage-wise growing) federated LoRA tuning.
//!
//! A global residual model is trained through stages of increasing depth.
//! Each stage groups the global layers by parameter similarity, fuses every
//! group into one representative layer, trains the resulting submodel with
//! FedAvg-style rounds over synthetic non-IID clients, and copies the trained
//! adapters back into the grouped layers.

pub mod analysis;
pub mod error;
pub mod federation;
pub mod fusion;
pub mod grouping;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod seeds;

pub use error::{Error, Result};
