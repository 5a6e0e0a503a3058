//! Weakly-supervised, fully convolutional detector that localises several
//! anomaly types at once, one heatmap per type.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod train;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use train::Trainer;
