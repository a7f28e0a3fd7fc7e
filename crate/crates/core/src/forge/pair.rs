use rand::Rng;

use crate::codec::LinearCodec;
use crate::conditioning::{build_pack, PackInputs, PackMode, TargetPlacement};
use crate::error::{ensure, Error, Result};
use crate::flow::TrainExample;
use crate::metrics::{chroma_embedding, cosine};
use crate::stitch::{select_keyframes, KeyframeStrategy};
use crate::synthkit::{mask_video, swap_video, Frame, IdentitySpec, MaskVideo, Swapper, VideoTensor};
use crate::Scalar;

/// Pairs whose swapper failed on more than this fraction of frames are dropped.
pub const MAX_FAILED_FRACTION: f64 = 0.9;

/// One role-reversed training tuple. The swapped video is the model input
/// and the untouched original supplies keyframes, target image and ground
/// truth.
#[derive(Debug, Clone)]
pub struct SwapPair {
    pub pair_id: u64,
    pub original: IdentitySpec,
    pub donor: IdentitySpec,
    pub input_video: VideoTensor,
    pub gt_video: VideoTensor,
    pub keyframe_indices: Vec<usize>,
    pub keyframes: Vec<Frame>,
    pub target_index: usize,
    pub target_image: Frame,
    pub mask: MaskVideo,
    pub similarity_score: f64,
    pub failed_frames: usize,
    pub swapper: Swapper,
}

/// Identity label attached to every frame of a video, if it has one.
fn video_label(v: &VideoTensor) -> Option<u64> {
    v.meta.as_ref().map(|m| m.identity.seed)
}

impl SwapPair {
    /// Checks the role-reversal invariants: equal lengths, guidance frames
    /// drawn from the original, and identity labels on the right side.
    pub fn audit(&self) -> Result<()> {
        let t = self.gt_video.len();
        ensure!(
            self.input_video.len() == t && self.mask.len() == t,
            Shape,
            "pair {}: input {} / gt {t} / mask {} frames",
            self.pair_id,
            self.input_video.len(),
            self.mask.len()
        );
        ensure!(
            self.keyframe_indices.len() == self.keyframes.len(),
            Shape,
            "pair {}: keyframe indices and frames differ in count",
            self.pair_id
        );
        let gt = video_label(&self.gt_video);
        ensure!(
            gt == Some(self.original.seed),
            InvalidArgument,
            "pair {}: ground truth is not labelled with the original identity",
            self.pair_id
        );
        let from_gt = |f: &Frame, i: usize, what: &str| -> Result<()> {
            ensure!(i < t, InvalidArgument, "pair {}: {what} index {i} outside video", self.pair_id);
            ensure!(
                f.data == self.gt_video.frame_data(i),
                InvalidArgument,
                "pair {}: {what} at {i} is not the ground-truth frame",
                self.pair_id
            );
            let label = f.meta.as_ref().map(|m| m.identity.seed);
            ensure!(
                label == Some(self.original.seed),
                InvalidArgument,
                "pair {}: {what} at {i} carries identity {label:?}",
                self.pair_id
            );
            Ok(())
        };
        for (f, &i) in self.keyframes.iter().zip(&self.keyframe_indices) {
            from_gt(f, i, "keyframe")?;
        }
        from_gt(&self.target_image, self.target_index, "target image")?;
        if self.donor.seed != self.original.seed {
            // Swapped frames are labelled with the donor or not at all
            // (artifacts and failures drop the label).
            if let Some(label) = video_label(&self.input_video) {
                ensure!(
                    label == self.donor.seed,
                    InvalidArgument,
                    "pair {}: input video labelled {label}, donor is {}",
                    self.pair_id,
                    self.donor.seed
                );
            }
        }
        ensure!(
            (-1.0..=1.0).contains(&self.similarity_score),
            InvalidArgument,
            "pair {}: similarity {} outside [-1, 1]",
            self.pair_id,
            self.similarity_score
        );
        Ok(())
    }

    /// Sliding training windows of `window` frames, `stride` apart. Each
    /// window is conditioned on the ground-truth frames at its two ends and
    /// on the pair's target image.
    pub fn training_windows<S: Scalar>(
        &self,
        codec: &LinearCodec,
        window: usize,
        stride: usize,
        mode: PackMode,
        placement: TargetPlacement,
    ) -> Result<Vec<TrainExample<S>>> {
        let t = self.gt_video.len();
        ensure!(window >= 2 && window <= t, InvalidArgument, "window {window} invalid for {t} frames");
        ensure!(stride >= 1, InvalidArgument, "window stride must be positive");
        let target = codec.encode_frame::<S>(&self.target_image)?;
        let mut out = Vec::new();
        for start in (0..=t - window).step_by(stride) {
            let idx: Vec<usize> = (start..start + window).collect();
            let src = codec.encode::<S>(&self.input_video.select(&idx)?)?;
            let gt = codec.encode::<S>(&self.gt_video.select(&idx)?)?;
            let first = codec.encode_frame::<S>(&self.gt_video.frame(start))?;
            let last = codec.encode_frame::<S>(&self.gt_video.frame(start + window - 1))?;
            let mask = self.mask.select(&idx)?;
            let pack = build_pack(
                codec,
                &PackInputs {
                    target_image: Some(&target),
                    start_keyframe: Some(&first),
                    source: &src,
                    end_keyframe: Some(&last),
                    mask: &mask,
                },
                mode,
                placement,
            )?;
            out.push(TrainExample { x1: gt.tokens, pack });
        }
        Ok(out)
    }
}

/// Mean per-frame cosine of pixel-route identity embeddings.
pub fn pair_similarity(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    ensure!(
        a.len() == b.len() && !a.is_empty(),
        Shape,
        "cannot compare videos of {} and {} frames",
        a.len(),
        b.len()
    );
    let total: f64 = (0..a.len())
        .map(|t| cosine(&chroma_embedding(&a.frame(t)), &chroma_embedding(&b.frame(t))))
        .sum();
    Ok(total / a.len() as f64)
}

/// Swaps `original` towards `donor` and keeps the original as ground truth.
pub fn forge_pair(
    pair_id: u64,
    original: &VideoTensor,
    donor: &IdentitySpec,
    swapper: Swapper,
    kf_budget: usize,
    rng: &mut impl Rng,
) -> Result<SwapPair> {
    let meta = original
        .meta
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("forging needs an original video with metadata".into()))?;
    let keyframe_indices = select_keyframes(original, kf_budget, KeyframeStrategy::Uniform)?;
    let (input_video, failed) = swap_video(original, donor, swapper)?;
    let failed_frames = failed.iter().filter(|&&f| f).count();
    let t = original.len();
    if failed_frames as f64 > MAX_FAILED_FRACTION * t as f64 {
        return Err(Error::Rejected(format!(
            "pair {pair_id}: swapper failed on {failed_frames} of {t} frames"
        )));
    }
    let target_index = rng.random_range(0..t);
    Ok(SwapPair {
        pair_id,
        original: meta.identity.clone(),
        donor: donor.clone(),
        similarity_score: pair_similarity(&input_video, original)?,
        keyframes: keyframe_indices.iter().map(|&i| original.frame(i)).collect(),
        keyframe_indices,
        target_image: original.frame(target_index),
        target_index,
        mask: mask_video(&meta.nuisance, original.height(), original.width())?,
        input_video,
        gt_video: original.clone(),
        failed_frames,
        swapper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecConfig;
    use crate::rng::rng_for;
    use crate::synthkit::{render_video, MotionProfile, NuisanceTrack};

    fn original(seed: u64, len: usize) -> VideoTensor {
        let tr = NuisanceTrack::smooth(len, seed + 50, MotionProfile::default()).unwrap();
        render_video(&IdentitySpec::from_seed(seed), &tr, 32, 32).unwrap()
    }

    #[test]
    fn self_swap_is_identity() {
        let v = original(3, 6);
        let p = forge_pair(0, &v, &IdentitySpec::from_seed(3), Swapper::Oracle, 2, &mut rng_for(1, 0)).unwrap();
        assert_eq!(p.input_video.data(), v.data());
        assert!((p.similarity_score - 1.0).abs() < 1e-9);
        p.audit().unwrap();
    }

    #[test]
    fn noisy_failures_raise_similarity() {
        let v = original(4, 30);
        let donor = IdentitySpec::from_seed(5);
        let mut rng = rng_for(2, 0);
        let oracle = forge_pair(0, &v, &donor, Swapper::Oracle, 3, &mut rng).unwrap();
        let noisy = Swapper::Noisy {
            failure_prob: 0.3,
            artifact_strength: 0.0,
            seed: 9,
        };
        let n = forge_pair(1, &v, &donor, noisy, 3, &mut rng).unwrap();
        assert!(n.failed_frames > 0 && n.failed_frames < 30);
        // Failed frames contribute exactly 1, the others match the oracle.
        let (sw, fl) = swap_video(&v, &donor, noisy).unwrap();
        let expect: f64 = (0..30)
            .map(|t| {
                if fl[t] {
                    1.0
                } else {
                    cosine(&chroma_embedding(&sw.frame(t)), &chroma_embedding(&v.frame(t)))
                }
            })
            .sum::<f64>()
            / 30.0;
        assert!((n.similarity_score - expect).abs() < 1e-12);
        assert!(oracle.similarity_score < n.similarity_score && n.similarity_score < 1.0);
        n.audit().unwrap();
    }

    #[test]
    fn total_failure_is_rejected() {
        let v = original(6, 5);
        let s = Swapper::Noisy {
            failure_prob: 1.0,
            artifact_strength: 0.0,
            seed: 1,
        };
        let e = forge_pair(0, &v, &IdentitySpec::from_seed(7), s, 2, &mut rng_for(0, 0)).unwrap_err();
        assert!(matches!(e, Error::Rejected(_)));
    }

    #[test]
    fn audit_catches_mislabelled_keyframe() {
        let v = original(8, 6);
        let other = original(9, 6);
        let mut p = forge_pair(0, &v, &IdentitySpec::from_seed(9), Swapper::Oracle, 2, &mut rng_for(0, 0)).unwrap();
        p.audit().unwrap();
        p.keyframes[1] = other.frame(p.keyframe_indices[1]);
        assert!(p.audit().is_err());
    }

    #[test]
    fn windows_cover_the_video() {
        let v = original(10, 12);
        let p = forge_pair(0, &v, &IdentitySpec::from_seed(11), Swapper::Oracle, 2, &mut rng_for(0, 0)).unwrap();
        let codec = LinearCodec::new(CodecConfig::default()).unwrap();
        let w = p.training_windows::<f32>(&codec, 5, 2, PackMode::Reference, TargetPlacement::First).unwrap();
        assert_eq!(w.len(), 4);
        let x = codec.encode::<f32>(&v.select(&[2, 3, 4, 5, 6]).unwrap()).unwrap();
        assert_eq!(w[1].x1, x.tokens);
    }
}
