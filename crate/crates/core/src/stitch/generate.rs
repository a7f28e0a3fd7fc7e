use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{LatentVideo, LinearCodec};
use crate::conditioning::{build_pack, to_grayscale_keyframe, PackInputs, PackMode, TargetPlacement};
use crate::error::{ensure, Result};
use crate::flow::euler_sample;
use crate::model::{Hints, Injection, VelocityModel};
use crate::rng::{derive_seed, rng_for};
use crate::synthkit::{Frame, MaskVideo, VideoTensor};
use crate::{Mat, Scalar};

const NOISE_STREAM: u64 = 0x6e6f_6973;

/// Everything one generation call sees, in generation order.
#[derive(Debug, Clone)]
pub struct ChunkRequest {
    pub index: usize,
    pub source: VideoTensor,
    pub mask: MaskVideo,
    /// `None` feeds a black frame.
    pub start: Option<Frame>,
    pub end: Option<Frame>,
    pub target: Option<Frame>,
}

/// Produces one chunk of frames, the same length as `request.source`.
pub trait ChunkGenerator {
    fn generate(&self, request: &ChunkRequest) -> Result<VideoTensor>;
}

#[derive(Debug, Clone, Copy)]
pub enum Velocity<'a, S> {
    Model(&'a VelocityModel<S>),
    /// `v ≡ 0`: the sampler returns its starting latent.
    Zero,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLatent {
    #[default]
    Noise,
    /// Start from the encoded source segment.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub steps: usize,
    pub init: InitLatent,
    pub mode: PackMode,
    pub placement: TargetPlacement,
    /// Convert guidance keyframes to grayscale before encoding.
    pub grayscale: bool,
    pub injection_scale: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            steps: 8,
            init: InitLatent::Noise,
            mode: PackMode::Reference,
            placement: TargetPlacement::First,
            grayscale: false,
            injection_scale: 1.0,
            seed: 0,
        }
    }
}

/// Rectified-flow sampling of the edited chunk in latent space.
pub struct FlowGenerator<'a, S> {
    pub velocity: Velocity<'a, S>,
    pub codec: &'a LinearCodec,
    pub config: GenConfig,
}

impl<'a, S: Scalar> FlowGenerator<'a, S> {
    pub fn new(velocity: Velocity<'a, S>, codec: &'a LinearCodec, config: GenConfig) -> Self {
        Self { velocity, codec, config }
    }

    fn guidance(&self, f: Option<&Frame>, h: usize, w: usize) -> Result<LatentVideo<S>> {
        match f {
            None => self.codec.black(h, w),
            Some(f) if self.config.grayscale => self.codec.encode_frame(&to_grayscale_keyframe(f)?),
            Some(f) => self.codec.encode_frame(f),
        }
    }
}

impl<S: Scalar> ChunkGenerator for FlowGenerator<'_, S> {
    fn generate(&self, req: &ChunkRequest) -> Result<VideoTensor> {
        let (h, w) = (req.source.height(), req.source.width());
        let source = self.codec.encode::<S>(&req.source)?;
        let start = self.guidance(req.start.as_ref(), h, w)?;
        let end = self.guidance(req.end.as_ref(), h, w)?;
        let target = req.target.as_ref().map(|f| self.codec.encode_frame::<S>(f)).transpose()?;
        let x0 = match self.config.init {
            InitLatent::Source => source.tokens.clone(),
            InitLatent::Noise => {
                let mut rng = rng_for(derive_seed(self.config.seed, NOISE_STREAM), req.index as u64);
                Mat::from_fn(source.tokens.rows(), source.tokens.cols(), |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    S::lit(z)
                })
            }
        };
        let x1 = match self.velocity {
            Velocity::Zero => x0,
            Velocity::Model(model) => {
                let pack = build_pack(
                    self.codec,
                    &PackInputs {
                        target_image: target.as_ref(),
                        start_keyframe: Some(&start),
                        source: &source,
                        end_keyframe: Some(&end),
                        mask: &req.mask,
                    },
                    self.config.mode,
                    self.config.placement,
                )?;
                let cache = model.encoder_cache(&pack)?;
                let injection = Injection::Scaled(S::lit(self.config.injection_scale));
                euler_sample(
                    |x, t| model.predict(x, Hints::Cached(&cache), t, injection),
                    &x0,
                    self.config.steps,
                )?
            }
        };
        self.codec.decode(&source.with_tokens(x1)?)
    }
}

/// Runs `generator` and, with `copy_through`, overwrites the first and last
/// output frames with the guidance frames.
pub fn generate_chunk(generator: &dyn ChunkGenerator, req: &ChunkRequest, copy_through: bool) -> Result<VideoTensor> {
    let out = generator.generate(req)?;
    ensure!(
        out.dims() == req.source.dims(),
        Shape,
        "generator returned {:?} for a {:?} chunk",
        out.dims(),
        req.source.dims()
    );
    if !copy_through {
        return Ok(out);
    }
    let mut frames: Vec<Frame> = out.frames().collect();
    let n = frames.len();
    for (slot, guide) in [(0, &req.start), (n - 1, &req.end)] {
        if let Some(g) = guide {
            ensure!(g.dims() == frames[slot].dims(), Shape, "guidance frame size {:?}", g.dims());
            frames[slot] = g.clone();
        }
    }
    VideoTensor::from_frames(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecConfig;
    use crate::synthkit::{mask_video, render_video, IdentitySpec, MotionProfile, NuisanceTrack};

    #[test]
    fn zero_velocity_from_source_reproduces_source() {
        let codec = LinearCodec::new(CodecConfig::default()).unwrap();
        let tr = NuisanceTrack::smooth(5, 3, MotionProfile::default()).unwrap();
        let v = render_video(&IdentitySpec::from_seed(1), &tr, 16, 16).unwrap();
        let gen = FlowGenerator::<f64>::new(
            Velocity::Zero,
            &codec,
            GenConfig {
                init: InitLatent::Source,
                ..GenConfig::default()
            },
        );
        let req = ChunkRequest {
            index: 0,
            source: v.clone(),
            mask: mask_video(&tr, 16, 16).unwrap(),
            start: None,
            end: None,
            target: None,
        };
        let out = gen.generate(&req).unwrap();
        let err = out.data().iter().zip(v.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-5, "{err}");
    }
}
