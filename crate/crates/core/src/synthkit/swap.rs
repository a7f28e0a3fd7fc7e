//! Stand-ins for a per-frame image face swapper.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::identity::IdentitySpec;
use super::nuisance::NuisanceState;
use super::render::{render_frame, HeadGeometry};
use super::video::{Frame, VideoTensor, CHANNELS};
use crate::error::{ensure, Result};
use crate::rng::rng_for;

const ARTIFACT_STREAM: u64 = 0xA27_1FAC7;

/// Exact identity replacement: the target identity rendered under the
/// frame's own nuisance state.
pub fn oracle_swap(frame: &Frame, nuis: &NuisanceState, target: &IdentitySpec) -> Result<Frame> {
    render_frame(target, nuis, frame.height, frame.width)
}

/// Result of one [`noisy_swap_detailed`] call.
#[derive(Debug, Clone)]
pub struct SwapOutcome {
    pub frame: Frame,
    pub failed: bool,
}

/// Imperfect swapper. With probability `failure_prob` the input frame comes
/// back untouched; otherwise the oracle result receives 1–3 smooth colour
/// patches scaled by `artifact_strength`.
pub fn noisy_swap(
    frame: &Frame,
    nuis: &NuisanceState,
    target: &IdentitySpec,
    failure_prob: f64,
    artifact_strength: f32,
    rng_seed: u64,
) -> Result<Frame> {
    noisy_swap_detailed(frame, nuis, target, failure_prob, artifact_strength, rng_seed).map(|o| o.frame)
}

pub fn noisy_swap_detailed(
    frame: &Frame,
    nuis: &NuisanceState,
    target: &IdentitySpec,
    failure_prob: f64,
    artifact_strength: f32,
    rng_seed: u64,
) -> Result<SwapOutcome> {
    ensure!(
        (0.0..=1.0).contains(&failure_prob),
        InvalidArgument,
        "failure_prob {failure_prob} outside [0, 1]"
    );
    ensure!(
        artifact_strength.is_finite() && artifact_strength >= 0.0,
        InvalidArgument,
        "artifact_strength must be finite and non-negative"
    );
    let mut rng = rng_for(rng_seed, ARTIFACT_STREAM);
    if rng.random::<f64>() < failure_prob {
        return Ok(SwapOutcome {
            frame: frame.clone(),
            failed: true,
        });
    }
    let mut out = oracle_swap(frame, nuis, target)?;
    if artifact_strength == 0.0 {
        return Ok(SwapOutcome {
            frame: out,
            failed: false,
        });
    }
    let (h, w) = (out.height, out.width);
    let geo = HeadGeometry::new(nuis, h, w);
    let [x0, y0, x1, y1] = geo.extent(1.0);
    let patches = rng.random_range(1..=3);
    for _ in 0..patches {
        let cx = rng.random_range(x0..=x1);
        let cy = rng.random_range(y0..=y1);
        let sigma = geo.radius * rng.random_range(0.2f32..0.5);
        let mut delta = [0f32; 3];
        for d in &mut delta {
            *d = rng.random_range(-1.0f32..=1.0) * artifact_strength;
        }
        for y in 0..h {
            for x in 0..w {
                let dx = x as f32 + 0.5 - cx;
                let dy = y as f32 + 0.5 - cy;
                let g = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                let o = (y * w + x) * CHANNELS;
                for (px, d) in out.data[o..o + CHANNELS].iter_mut().zip(delta) {
                    *px = (*px + g * d).clamp(0.0, 1.0);
                }
            }
        }
    }
    // The pixels no longer match a clean render of `target`.
    out.meta = None;
    Ok(SwapOutcome {
        frame: out,
        failed: false,
    })
}

/// Which per-frame swapper to apply to a whole video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Swapper {
    Oracle,
    Noisy {
        failure_prob: f64,
        artifact_strength: f32,
        seed: u64,
    },
}

/// Swaps every frame of a metadata-carrying video to `target`. Returns the
/// swapped video and per-frame failure flags.
pub fn swap_video(video: &VideoTensor, target: &IdentitySpec, swapper: Swapper) -> Result<(VideoTensor, Vec<bool>)> {
    let meta = video.meta.as_ref().ok_or_else(|| {
        crate::Error::InvalidArgument("swapping needs a video with nuisance metadata".into())
    })?;
    let mut frames = Vec::with_capacity(video.len());
    let mut failed = Vec::with_capacity(video.len());
    for (t, f) in video.frames().enumerate() {
        let n = &meta.nuisance.states()[t];
        let o = match swapper {
            Swapper::Oracle => SwapOutcome {
                frame: oracle_swap(&f, n, target)?,
                failed: false,
            },
            Swapper::Noisy {
                failure_prob,
                artifact_strength,
                seed,
            } => noisy_swap_detailed(
                &f,
                n,
                target,
                failure_prob,
                artifact_strength,
                crate::rng::derive_seed(seed, t as u64),
            )?,
        };
        frames.push(o.frame);
        failed.push(o.failed);
    }
    let mut out = VideoTensor::from_frames(&frames)?;
    out.fps = video.fps;
    Ok((out, failed))
}
