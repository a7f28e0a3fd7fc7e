//! End-to-end orchestration: configuration, face regions, the swap flow,
//! the training driver and benchmark evaluation.

mod config;
mod evaluate;
mod region;
mod swap;
mod train;

pub use config::{RunConfig, SplitHalf};
pub use evaluate::{evaluate, METHODS};
pub use region::{
    crop_mask, crop_region, crop_video, detect_regions, dilate, feather_weight, paste_back, resample, smooth_boxes,
    AutoDetector, BoxF, Detector, MetadataDetector, PixelDetector, Region, SMOOTHING,
};
pub use swap::{load_model, load_source, load_target, run_swap, KeyframeEditor, KeyframeRecord, OracleEditor, SwapOutput};
pub use train::{mode_dir_name, selected_entries, train, training_examples, TrainRun, CHECKPOINT_FILE, LOSS_FILE};
