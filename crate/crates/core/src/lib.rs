pub mod codec;
pub mod conditioning;
pub mod error;
pub mod flow;
pub mod forge;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod stitch;
pub mod synthkit;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Mat;

/// Single-precision aliases used by the pipeline.
pub type Mat32 = Mat<f32>;
pub type Latent = codec::LatentVideo<f32>;
pub type Pack = conditioning::ConditioningPack<f32>;
pub type Model = model::VelocityModel<f32>;
pub type ModelTrainer = flow::Trainer<f32>;
pub type ModelCheckpoint = flow::Checkpoint<f32>;
pub type Example = flow::TrainExample<f32>;

/// Double-precision aliases for gradient checks and oracles.
pub type Mat64 = Mat<f64>;
pub type Latent64 = codec::LatentVideo<f64>;
pub type Pack64 = conditioning::ConditioningPack<f64>;
pub type Model64 = model::VelocityModel<f64>;
