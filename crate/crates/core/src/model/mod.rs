//! Ego-network exposure model: feature mapping, exposure mapping, outcome
//! heads, losses, training and inference.

pub mod batch;
pub mod config;
pub mod diagnostics;
pub mod forward;
pub mod losses;
pub mod params;
mod train;

#[cfg(test)]
mod tests;

pub use batch::GraphBatch;
pub use config::{Head, TrainConfig};
pub use params::{Dims, ExposureKind, Group, Param};
pub use train::{fit, split_units, EpochRecord, Model, Prediction, TrainReport};
