//! Long-video editing: keyframe selection, chunk planning under a fixed
//! window, chunk generation and assembly with last-frame propagation.

mod assemble;
mod generate;
mod keyframes;
mod plan;

pub use assemble::{stitch, ChunkProvenance, EndGuidance, StitchOptions, SwapResult};
pub use generate::{generate_chunk, ChunkGenerator, ChunkRequest, FlowGenerator, GenConfig, InitLatent, Velocity};
pub use keyframes::{
    appearance_feature, greedy_keyframes, select_keyframes, uniform_keyframes, validate_indices, KeyframeSet,
    KeyframeStrategy,
};
pub use plan::{
    labor_reduction, plan_chunks, AuxConfig, Chunk, ChunkPlan, Direction, EndRole, Fill, LaborReduction, StartRole,
};
