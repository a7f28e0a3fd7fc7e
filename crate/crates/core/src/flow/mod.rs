//! Rectified-flow training and sampling.

mod checkpoint;
mod ops;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, Header, TensorEntry};
pub use ops::{euler_sample, interpolate, rf_loss, sample_timestep, velocity_target, RfSample, TimestepDist};
pub use optim::{AdamState, AdamW};
pub use train::{train_step, TrainConfig, TrainExample, Trainer};
