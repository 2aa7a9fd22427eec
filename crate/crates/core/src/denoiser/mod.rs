//! The noise-prediction network, its exact gradients and the optimizer.

pub mod adam;
pub mod layers;
pub mod net;
pub mod params;
pub mod train;

pub use adam::{adam_step, AdamConfig, OptState};
pub use layers::{mish, mish_grad};
pub use params::{layout, Architecture, DenoiserParams, GridSpec, InitKind};
pub use train::{gradients, train, LrSchedule, TrainConfig, TrainLog};
