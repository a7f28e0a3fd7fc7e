//! Conditioning pack: the latent token sequence the attribute encoder reads.

use serde::{Deserialize, Serialize};

use crate::codec::{LatentVideo, LinearCodec};
use crate::error::{ensure, Error, Result};
use crate::synthkit::MaskVideo;
use crate::{Mat, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackMode {
    /// Full source video plus keyframes and target image.
    Reference,
    /// Source tokens inside the mask are replaced by encoded black.
    Inpainting,
    /// Both keyframe slots hold encoded black frames.
    NoKeyframe,
    /// The target-image segment is left out.
    NoTargetImage,
}

impl std::str::FromStr for PackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Self::Reference),
            "inpainting" => Ok(Self::Inpainting),
            "no_keyframe" => Ok(Self::NoKeyframe),
            "no_target_image" => Ok(Self::NoTargetImage),
            _ => Err(Error::Config(format!("unknown pack mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPlacement {
    #[default]
    First,
    Last,
}

impl std::str::FromStr for TargetPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Self::First),
            "last" => Ok(Self::Last),
            _ => Err(Error::Config(format!("unknown target placement `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    TargetImage,
    StartKeyframe,
    Source,
    EndKeyframe,
}

/// A labelled run of latent frames inside the pack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub frame_start: usize,
    pub frames: usize,
}

/// Inputs to [`build_pack`]; all latents must come from the same codec.
pub struct PackInputs<'a, S> {
    pub target_image: Option<&'a LatentVideo<S>>,
    pub start_keyframe: Option<&'a LatentVideo<S>>,
    pub source: &'a LatentVideo<S>,
    pub end_keyframe: Option<&'a LatentVideo<S>>,
    pub mask: &'a MaskVideo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningPack<S> {
    /// `(frames · tokens_per_frame) × d`.
    pub tokens: Mat<S>,
    /// One `{0, 1}` entry per token.
    pub mask: Vec<S>,
    pub segments: Vec<Segment>,
    pub mode: PackMode,
    pub placement: TargetPlacement,
    pub grid: (usize, usize),
    pub dim: usize,
}

impl<S: Scalar> ConditioningPack<S> {
    pub fn tokens_per_frame(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn frames(&self) -> usize {
        self.segments.iter().map(|s| s.frames).sum()
    }

    pub fn token_count(&self) -> usize {
        self.tokens.rows()
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<Segment> {
        self.segments.iter().copied().find(|s| s.kind == kind)
    }

    pub fn source_segment(&self) -> Segment {
        self.segment(SegmentKind::Source).expect("every pack has a source segment")
    }

    /// Segment label of every latent frame, in order.
    pub fn frame_labels(&self) -> Vec<SegmentKind> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.kind, s.frames))
            .collect()
    }
}

/// Nearest-neighbour downsampling of a pixel mask to one value per latent
/// token, sampling each patch at its centre pixel.
pub fn downsample_mask(mask: &MaskVideo, patch: usize) -> Result<Vec<bool>> {
    let (h, w) = (mask.height(), mask.width());
    ensure!(
        patch > 0 && h % patch == 0 && w % patch == 0,
        Shape,
        "mask {h}x{w} not divisible by patch {patch}"
    );
    let (gr, gc) = (h / patch, w / patch);
    let c = patch / 2;
    let mut out = Vec::with_capacity(mask.len() * gr * gc);
    for t in 0..mask.len() {
        for r in 0..gr {
            for q in 0..gc {
                out.push(mask.at(t, r * patch + c, q * patch + c));
            }
        }
    }
    Ok(out)
}

fn check_single_frame<S: Scalar>(z: &LatentVideo<S>, name: &str) -> Result<()> {
    ensure!(z.frames == 1, Shape, "{name} must be one latent frame, got {}", z.frames);
    Ok(())
}

/// Concatenates `[target?, start, source, end]` latent tokens with a per-token
/// mask channel, applying the ablation `mode`.
pub fn build_pack<S: Scalar>(
    codec: &LinearCodec,
    inputs: &PackInputs<'_, S>,
    mode: PackMode,
    placement: TargetPlacement,
) -> Result<ConditioningPack<S>> {
    let src = inputs.source;
    let cfg = codec.config();
    let check_codec = |z: &LatentVideo<S>, name: &str| -> Result<()> {
        ensure!(z.codec == cfg, Config, "{name} was encoded by a different codec");
        ensure!(z.grid == src.grid, Shape, "{name} latent grid {:?} vs source {:?}", z.grid, src.grid);
        Ok(())
    };
    check_codec(src, "source segment")?;
    let (_, h, w, _) = src.source_dims;
    ensure!(
        inputs.mask.len() == src.frames && inputs.mask.height() == h && inputs.mask.width() == w,
        Shape,
        "mask {}x{}x{} does not match source segment {}x{h}x{w}",
        inputs.mask.len(),
        inputs.mask.height(),
        inputs.mask.width(),
        src.frames
    );
    let black = codec.black::<S>(h, w)?;
    let keyframe = |z: Option<&LatentVideo<S>>, name: &str| -> Result<LatentVideo<S>> {
        if mode == PackMode::NoKeyframe {
            return Ok(black.clone());
        }
        let z = z.ok_or_else(|| Error::InvalidArgument(format!("{name} is required in {mode:?} mode")))?;
        check_codec(z, name)?;
        check_single_frame(z, name)?;
        Ok(z.clone())
    };
    let start = keyframe(inputs.start_keyframe, "start keyframe")?;
    let end = keyframe(inputs.end_keyframe, "end keyframe")?;
    let target = match mode {
        PackMode::NoTargetImage => None,
        _ => {
            let z = inputs
                .target_image
                .ok_or_else(|| Error::InvalidArgument(format!("target image is required in {mode:?} mode")))?;
            check_codec(z, "target image")?;
            check_single_frame(z, "target image")?;
            Some(z.clone())
        }
    };

    let token_mask = downsample_mask(inputs.mask, cfg.patch)?;
    let mut source = src.tokens.clone();
    if mode == PackMode::Inpainting {
        let n = src.tokens_per_frame();
        for (i, &m) in token_mask.iter().enumerate() {
            if m {
                source.row_mut(i).copy_from_slice(black.tokens.row(i % n));
            }
        }
    }

    let mut parts: Vec<(SegmentKind, Mat<S>, Vec<S>)> = Vec::with_capacity(4);
    let zeros = |z: &LatentVideo<S>| vec![S::zero(); z.tokens.rows()];
    let source_mask = token_mask.iter().map(|&m| if m { S::one() } else { S::zero() }).collect();
    if let (Some(t), TargetPlacement::First) = (&target, placement) {
        parts.push((SegmentKind::TargetImage, t.tokens.clone(), zeros(t)));
    }
    parts.push((SegmentKind::StartKeyframe, start.tokens.clone(), zeros(&start)));
    parts.push((SegmentKind::Source, source, source_mask));
    parts.push((SegmentKind::EndKeyframe, end.tokens.clone(), zeros(&end)));
    if let (Some(t), TargetPlacement::Last) = (&target, placement) {
        parts.push((SegmentKind::TargetImage, t.tokens.clone(), zeros(t)));
    }

    let n = src.tokens_per_frame();
    let mut segments = Vec::with_capacity(parts.len());
    let mut frame_start = 0;
    for (kind, m, _) in &parts {
        let frames = m.rows() / n;
        segments.push(Segment {
            kind: *kind,
            frame_start,
            frames,
        });
        frame_start += frames;
    }
    let mats: Vec<&Mat<S>> = parts.iter().map(|p| &p.1).collect();
    let tokens = Mat::vstack(&mats)?;
    let mask = parts.into_iter().flat_map(|p| p.2).collect();
    Ok(ConditioningPack {
        tokens,
        mask,
        segments,
        mode,
        placement,
        grid: src.grid,
        dim: cfg.dim,
    })
}
