use serde::{Deserialize, Serialize};

use super::generate::{generate_chunk, ChunkGenerator, ChunkRequest};
use super::keyframes::KeyframeSet;
use super::plan::{Chunk, ChunkPlan, Direction, EndRole, Fill, StartRole};
use crate::error::{ensure, Error, Result};
use crate::synthkit::{Frame, MaskVideo, VideoTensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndGuidance {
    #[default]
    Enabled,
    /// Only the start frame guides each chunk; the end slot is black.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchOptions {
    pub copy_through: bool,
    pub end_guidance: EndGuidance,
}

impl Default for StitchOptions {
    fn default() -> Self {
        Self {
            copy_through: true,
            end_guidance: EndGuidance::Enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkProvenance {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub pass: usize,
    /// Frames this chunk wrote into the output.
    pub written: Vec<usize>,
    /// Chunk whose output supplied the start guidance.
    pub start_from: Option<usize>,
    /// Whether that guidance frame was bit-identical to the supplying
    /// chunk's output.
    pub propagation_exact: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct SwapResult {
    pub video: VideoTensor,
    pub provenance: Vec<ChunkProvenance>,
    /// Per-chunk output in time order, one frame per chunk position.
    pub chunk_outputs: Vec<VideoTensor>,
}

fn same_bits(a: &Frame, b: &Frame) -> bool {
    a.dims() == b.dims() && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn stretch(positions: &[usize], window: usize) -> Vec<usize> {
    let n = positions.len();
    (0..window)
        .map(|j| positions[((j * (n - 1)) as f64 / (window - 1) as f64).round() as usize])
        .collect()
}

/// Generates the chunks of `plan` in order and assembles the edited video.
/// Frames already present in the output are never overwritten.
pub fn stitch(
    generator: &dyn ChunkGenerator,
    source: &VideoTensor,
    mask: &MaskVideo,
    keyframes: &KeyframeSet,
    target: Option<&Frame>,
    plan: &ChunkPlan,
    options: StitchOptions,
) -> Result<SwapResult> {
    plan.validate()?;
    ensure!(source.len() == plan.frames, Shape, "video has {} frames, plan {}", source.len(), plan.frames);
    ensure!(mask.len() == source.len(), Shape, "mask has {} frames, video {}", mask.len(), source.len());
    ensure!(
        keyframes.indices() == plan.keyframes.as_slice(),
        InvalidArgument,
        "keyframe set does not match the plan"
    );
    let dims = (source.height(), source.width(), source.channels());
    ensure!(
        keyframes.frames().iter().all(|f| f.dims() == dims),
        Shape,
        "keyframe size differs from video {dims:?}"
    );

    let mut out: Vec<Option<Frame>> = vec![None; plan.frames];
    let mut writer: Vec<Option<usize>> = vec![None; plan.frames];
    let mut outputs: Vec<VideoTensor> = Vec::with_capacity(plan.chunks.len());
    let mut provenance = Vec::with_capacity(plan.chunks.len());
    for chunk in &plan.chunks {
        let (frames, prov) = run_chunk(generator, source, mask, keyframes, target, plan, options, chunk, &out, &writer, &outputs)
            .map_err(|e| Error::Chunk {
                index: chunk.index,
                source: Box::new(e),
            })?;
        for &p in &prov.written {
            let i = chunk.positions().binary_search(&p).expect("written frame lies in chunk");
            out[p] = Some(frames.frame(i));
            writer[p] = Some(chunk.index);
        }
        outputs.push(frames);
        provenance.push(prov);
    }
    let frames: Vec<Frame> = out.into_iter().map(|f| f.expect("validated plan covers every frame")).collect();
    let mut video = VideoTensor::from_frames(&frames)?;
    video.fps = source.fps;
    Ok(SwapResult {
        video,
        provenance,
        chunk_outputs: outputs,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_chunk(
    generator: &dyn ChunkGenerator,
    source: &VideoTensor,
    mask: &MaskVideo,
    keyframes: &KeyframeSet,
    target: Option<&Frame>,
    plan: &ChunkPlan,
    options: StitchOptions,
    chunk: &Chunk,
    out: &[Option<Frame>],
    writer: &[Option<usize>],
    outputs: &[VideoTensor],
) -> Result<(VideoTensor, ChunkProvenance)> {
    let keyframe = |i: usize| {
        keyframes
            .get(i)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("frame {i} is not a keyframe")))
    };
    let existing = |i: usize, what: &str| {
        out[i]
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("{what} frame {i} has not been generated yet")))
    };
    let start = match chunk.start_role {
        StartRole::Keyframe => keyframe(chunk.start)?,
        StartRole::Propagated => existing(chunk.start, "propagated start")?,
    };
    let end = match (options.end_guidance, chunk.end_role) {
        (EndGuidance::Disabled, _) => None,
        (_, EndRole::Keyframe) => Some(keyframe(chunk.end)?),
        (_, EndRole::Anchor) => Some(existing(chunk.end, "anchor")?),
    };

    let (start_from, propagation_exact) = match chunk.start_role {
        StartRole::Keyframe => (None, None),
        StartRole::Propagated => {
            let c = writer[chunk.start].expect("propagated frame has a writer");
            let prev = &plan.chunks[c];
            let i = prev.positions().binary_search(&chunk.start).expect("writer covers frame");
            (Some(c), Some(same_bits(&outputs[c].frame(i), &start)))
        }
    };
    ensure!(
        propagation_exact != Some(false),
        InvalidArgument,
        "start guidance differs from the output of chunk {}",
        start_from.unwrap_or_default()
    );

    let positions = chunk.positions();
    let mut run = match chunk.fill {
        Fill::Interpolate if positions.len() < plan.window => stretch(&positions, plan.window),
        _ => positions.clone(),
    };
    let reverse = chunk.direction == Direction::Reverse;
    let (mut g_start, mut g_end) = (Some(start), end);
    if reverse {
        run.reverse();
        std::mem::swap(&mut g_start, &mut g_end);
    }
    let req = ChunkRequest {
        index: chunk.index,
        source: source.select(&run)?,
        mask: mask.select(&run)?,
        start: g_start,
        end: g_end,
        target: target.cloned(),
    };
    let generated = generate_chunk(generator, &req, options.copy_through)?;
    let mut frames: Vec<Frame> = generated.frames().collect();
    if reverse {
        frames.reverse();
    }
    if frames.len() != positions.len() {
        let (n, w) = (positions.len(), frames.len());
        frames = (0..n)
            .map(|i| frames[((i * (w - 1)) as f64 / (n - 1) as f64).round() as usize].clone())
            .collect();
    }
    let written = positions.iter().copied().filter(|&p| out[p].is_none()).collect();
    let prov = ChunkProvenance {
        index: chunk.index,
        start: chunk.start,
        end: chunk.end,
        pass: chunk.pass,
        written,
        start_from,
        propagation_exact,
    };
    Ok((VideoTensor::from_frames(&frames)?, prov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stitch::plan::{plan_chunks, AuxConfig};
    use crate::synthkit::{mask_video, render_video, IdentitySpec, MotionProfile, NuisanceTrack};

    /// Darkens the source by a chunk-dependent amount; fails on request.
    struct Shade {
        fail_at: Option<usize>,
    }

    impl ChunkGenerator for Shade {
        fn generate(&self, req: &ChunkRequest) -> Result<VideoTensor> {
            if self.fail_at == Some(req.index) {
                return Err(Error::NonFinite("diverged".into()));
            }
            let k = 1.0 - 0.05 * (req.index + 1) as f32;
            let (t, h, w, _) = req.source.dims();
            VideoTensor::new(t, h, w, req.source.data().iter().map(|v| v * k).collect())
        }
    }

    struct Fixture {
        video: VideoTensor,
        mask: MaskVideo,
    }

    fn fixture(t: usize) -> Fixture {
        let tr = NuisanceTrack::smooth(t, 9, MotionProfile::default()).unwrap();
        Fixture {
            video: render_video(&IdentitySpec::from_seed(4), &tr, 8, 8).unwrap(),
            mask: mask_video(&tr, 8, 8).unwrap(),
        }
    }

    fn keys(v: &VideoTensor, idx: &[usize]) -> KeyframeSet {
        let frames = idx.iter().map(|&i| v.frame(i).without_meta()).collect();
        KeyframeSet::new(idx.to_vec(), frames, v.len()).unwrap()
    }

    #[test]
    fn shared_boundary_is_written_once() {
        let fx = fixture(9);
        let plan = plan_chunks(9, &[0, 4, 8], 5, AuxConfig::default()).unwrap();
        let k = keys(&fx.video, &[0, 4, 8]);
        let no_copy = StitchOptions {
            copy_through: false,
            ..StitchOptions::default()
        };
        let r = stitch(&Shade { fail_at: None }, &fx.video, &fx.mask, &k, None, &plan, no_copy).unwrap();
        assert_eq!(r.provenance[0].written, [0, 1, 2, 3, 4]);
        assert_eq!(r.provenance[1].written, [5, 6, 7, 8]);
        assert_eq!(r.video.frame(4).data, r.chunk_outputs[0].frame(4).data);
        assert_eq!(r.provenance[1].start_from, Some(0));
        assert_eq!(r.provenance[1].propagation_exact, Some(true));
    }

    #[test]
    fn single_chunk_matches_generate_chunk() {
        let fx = fixture(6);
        let plan = plan_chunks(6, &[0, 5], 9, AuxConfig::default()).unwrap();
        let k = keys(&fx.video, &[0, 5]);
        let gen = Shade { fail_at: None };
        let r = stitch(&gen, &fx.video, &fx.mask, &k, None, &plan, StitchOptions::default()).unwrap();
        let req = ChunkRequest {
            index: 0,
            source: fx.video.clone(),
            mask: fx.mask.clone(),
            start: Some(k.frames()[0].clone()),
            end: Some(k.frames()[1].clone()),
            target: None,
        };
        let direct = generate_chunk(&gen, &req, true).unwrap();
        assert_eq!(r.video.data(), direct.data());
        assert_eq!(r.video.frame(5).data, k.frames()[1].data);
    }

    #[test]
    fn reverse_and_skim_plans_assemble() {
        let fx = fixture(30);
        let aux = AuxConfig {
            reverse: true,
            fill: Fill::Interpolate,
            ..AuxConfig::default()
        };
        let plan = plan_chunks(30, &[0, 12, 29], 5, aux).unwrap();
        let k = keys(&fx.video, &[0, 12, 29]);
        let r = stitch(&Shade { fail_at: None }, &fx.video, &fx.mask, &k, None, &plan, StitchOptions::default()).unwrap();
        assert_eq!(r.video.len(), 30);
        for (i, &p) in k.indices().iter().enumerate() {
            assert_eq!(r.video.frame(p).data, k.frames()[i].data);
        }
        let mut count = [0; 30];
        for p in &r.provenance {
            for &w in &p.written {
                count[w] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }

    #[test]
    fn failure_reports_chunk_index() {
        let fx = fixture(9);
        let plan = plan_chunks(9, &[0, 4, 8], 5, AuxConfig::default()).unwrap();
        let k = keys(&fx.video, &[0, 4, 8]);
        let e = stitch(&Shade { fail_at: Some(1) }, &fx.video, &fx.mask, &k, None, &plan, StitchOptions::default())
            .unwrap_err();
        assert!(matches!(e, Error::Chunk { index: 1, .. }), "{e}");
    }
}
