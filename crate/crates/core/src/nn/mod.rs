//! A small CNN inference engine with activation taps and input gradients.

mod format;
mod forward;
mod layer;
mod model;
pub(crate) mod ops;

pub(crate) use format::Reader;
pub use format::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use forward::{conv2d_forward, ActivationTaps, CountingNetwork, ForwardOutput, Network, Objective};
pub use layer::{Conv2d, Dense, Layer, LayerDesc};
pub use model::{Architecture, ModelGraph};
