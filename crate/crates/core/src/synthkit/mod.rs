//! Procedural face videos with exact identity and nuisance ground truth,
//! plus oracle and noisy per-frame swappers.

mod fvt;
mod identity;
mod nuisance;
mod render;
mod swap;
mod video;

pub use fvt::{
    decode_fvt, decode_mask_fvt, encode_fvt, encode_mask_fvt, read_fvt, read_mask, sidecar_path, write_fvt, write_mask, Sidecar,
};
pub use identity::{Blob, IdentitySpec};
pub use nuisance::{MotionProfile, NuisanceState, NuisanceTrack, ILLUMINATION_RANGE};
pub use render::{
    background, face_mask, mask_video, render_frame, render_video, HeadGeometry, HEAD_AXES, HEAD_SCALE, MASK_RHO,
    MIN_DIM,
};
pub use swap::{noisy_swap, noisy_swap_detailed, oracle_swap, swap_video, SwapOutcome, Swapper};
pub use video::{default_fps, Frame, FrameMeta, MaskVideo, VideoMeta, VideoTensor, CHANNELS};
