//! detect → crop → keyframe edit → plan → stitch → paste → evaluate.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::region::{crop_mask, crop_region, crop_video, detect_regions, dilate, paste_back, resample, AutoDetector, Region};
use crate::codec::LinearCodec;
use crate::conditioning::PackMode;
use crate::error::{ensure, Error, Result};
use crate::flow::Checkpoint;
use crate::metrics::{evaluate_method, EvalCase, EvalSettings, ExtractorSuite, MetricReport};
use crate::model::VelocityModel;
use crate::rng::derive_seed;
use crate::stitch::{plan_chunks, select_keyframes, stitch, ChunkPlan, FlowGenerator, KeyframeSet, SwapResult, Velocity};
use crate::synthkit::{
    mask_video, oracle_swap, read_fvt, render_frame, render_video, write_fvt, Frame, IdentitySpec, MaskVideo,
    MotionProfile, NuisanceState, NuisanceTrack, VideoTensor,
};

const SOURCE_MOTION_STREAM: u64 = 0x50C;

/// Image-level face editor applied to keyframes only.
pub trait KeyframeEditor {
    fn edit(&self, frame: &Frame, index: usize) -> Result<Frame>;
}

/// Re-renders the frame with the target identity under the frame's own
/// nuisance state.
#[derive(Debug, Clone)]
pub struct OracleEditor {
    pub target: IdentitySpec,
}

impl KeyframeEditor for OracleEditor {
    fn edit(&self, f: &Frame, index: usize) -> Result<Frame> {
        let m = f
            .meta
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("frame {index} has no nuisance metadata to edit with")))?;
        oracle_swap(f, &m.nuisance, &self.target)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub index: usize,
    pub path: String,
    /// Taken from the drop-in directory instead of the editor.
    pub overridden: bool,
}

pub struct SwapOutput {
    pub result: SwapResult,
    pub video: VideoTensor,
    pub regions: Vec<Region>,
    pub keyframes: Vec<KeyframeRecord>,
    pub plan: ChunkPlan,
    pub report: MetricReport,
}

/// The source video: `cfg.source` if set, otherwise a render of
/// `cfg.source_seed` at the source resolution.
pub fn load_source(cfg: &RunConfig) -> Result<VideoTensor> {
    match &cfg.source {
        Some(p) => read_fvt(p),
        None => {
            let track = NuisanceTrack::smooth(
                cfg.frames,
                derive_seed(cfg.source_seed, SOURCE_MOTION_STREAM),
                MotionProfile::default(),
            )?;
            render_video(
                &IdentitySpec::from_seed(cfg.source_seed),
                &track,
                cfg.source_height,
                cfg.source_width,
            )
        }
    }
}

/// The target identity image at model resolution: `cfg.target` (first
/// frame, resampled if needed) or a neutral render of `cfg.target_seed`.
pub fn load_target(cfg: &RunConfig) -> Result<Frame> {
    match &cfg.target {
        Some(p) => {
            let f = read_fvt(p)?.frame(0);
            if (f.height, f.width) == (cfg.height, cfg.width) {
                Ok(f)
            } else {
                Ok(resample(&f, 0.0, 0.0, f.width as f32, f.height as f32, cfg.height, cfg.width))
            }
        }
        None => render_frame(
            &IdentitySpec::from_seed(cfg.target_seed),
            &NuisanceState::NEUTRAL,
            cfg.height,
            cfg.width,
        ),
    }
}

/// Loads the model checkpoint named by `cfg.checkpoint` and checks that it
/// was trained with the configured codec.
pub fn load_model(cfg: &RunConfig) -> Result<VelocityModel<f32>> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("`checkpoint` is required".into()))?;
    let ck = Checkpoint::<f32>::load(path)?;
    if let Some(c) = ck.run.get("codec") {
        let codec: crate::codec::CodecConfig = serde_json::from_value(c.clone())?;
        ensure!(
            codec == cfg.codec_config(),
            Config,
            "checkpoint codec {codec:?} differs from the configured {:?}",
            cfg.codec_config()
        );
    }
    Ok(ck.model)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Editable region at source resolution: the renderer's mask grown by
/// `mask_dilate`, or the whole frame when the source has no metadata.
fn source_mask(cfg: &RunConfig, source: &VideoTensor) -> Result<MaskVideo> {
    match &source.meta {
        Some(m) => dilate(&mask_video(&m.nuisance, source.height(), source.width())?, cfg.mask_dilate),
        None => Ok(MaskVideo::filled(source.len(), source.height(), source.width(), true)),
    }
}

fn keyframe_override(dir: Option<&PathBuf>, k: usize) -> Option<PathBuf> {
    let p = dir?.join(format!("{k}.fvt"));
    p.exists().then_some(p)
}

/// Runs the whole inference flow and persists every intermediate under
/// `out`. A failing stage is reported by name; files from earlier stages
/// stay on disk.
pub fn run_swap(
    cfg: &RunConfig,
    source: &VideoTensor,
    target: &Frame,
    editor: &dyn KeyframeEditor,
    model: &VelocityModel<f32>,
    mode: PackMode,
    out: &Path,
) -> Result<SwapOutput> {
    mkdir(out)?;
    fs::write(out.join("config.txt"), cfg.to_text()).map_err(|e| Error::io(out.join("config.txt"), e))?;
    let (t, sh, sw, _) = source.dims();
    let (h, w) = (cfg.height, cfg.width);

    let regions: Vec<Region> = (|| {
        let boxes = detect_regions(source, &AutoDetector)?;
        let regions: Vec<Region> = boxes
            .iter()
            .map(|&b| crop_region(b, cfg.crop_inflate, sh, sw, cfg.feather))
            .collect();
        write_json(&out.join("regions.json"), &regions)?;
        Ok(regions)
    })()
    .map_err(|e: Error| e.in_stage("detect"))?;

    let (crops, full_mask, crop_m) = (|| {
        let crops = crop_video(source, &regions, h, w)?;
        let full_mask = source_mask(cfg, source)?;
        let crop_m = crop_mask(&full_mask, &regions, h, w)?;
        Ok((crops, full_mask, crop_m))
    })()
    .map_err(|e: Error| e.in_stage("crop"))?;

    let (kset, records) = (|| {
        let indices = match &cfg.keyframes {
            Some(k) => k.clone(),
            None => select_keyframes(&crops, cfg.keyframe_budget, cfg.keyframe_strategy)?,
        };
        ensure!(
            indices.last() == Some(&(t - 1)),
            Config,
            "keyframes {indices:?} do not fit a {t}-frame video"
        );
        let kdir = out.join("keyframes");
        mkdir(&kdir)?;
        let mut frames = Vec::with_capacity(indices.len());
        let mut records = Vec::with_capacity(indices.len());
        for &k in &indices {
            let r = regions[k];
            let (edited, overridden) = match keyframe_override(cfg.keyframe_dir.as_ref(), k) {
                Some(p) => (read_fvt(&p)?.frame(0), true),
                None => (editor.edit(&source.frame(k), k)?, false),
            };
            let crop = match (edited.height, edited.width) {
                (eh, ew) if (eh, ew) == (sh, sw) => {
                    resample(&edited, r.x as f32, r.y as f32, r.w as f32, r.h as f32, h, w)
                }
                (eh, ew) if (eh, ew) == (h, w) => edited.without_meta(),
                (eh, ew) => {
                    return Err(Error::Shape(format!(
                        "keyframe {k} is {eh}x{ew}; expected {sh}x{sw} or {h}x{w}"
                    )))
                }
            };
            let rel = format!("keyframes/kf_{k:05}.fvt");
            write_fvt(&out.join(&rel), &VideoTensor::from_frames(std::slice::from_ref(&crop))?)?;
            records.push(KeyframeRecord {
                index: k,
                path: rel,
                overridden,
            });
            frames.push(crop);
        }
        write_json(&out.join("keyframes.json"), &records)?;
        Ok((KeyframeSet::new(indices, frames, t)?, records))
    })()
    .map_err(|e: Error| e.in_stage("keyframes"))?;

    let plan = (|| {
        let plan = plan_chunks(t, kset.indices(), cfg.window, cfg.aux_config())?;
        write_json(&out.join("plan.json"), &plan)?;
        Ok(plan)
    })()
    .map_err(|e: Error| e.in_stage("plan"))?;

    let result = (|| {
        let codec = LinearCodec::new(cfg.codec_config())?;
        let gen = FlowGenerator::new(Velocity::Model(model), &codec, cfg.gen_config(mode));
        let result = stitch(&gen, &crops, &crop_m, &kset, Some(target), &plan, cfg.stitch_options())?;
        let cdir = out.join("chunks");
        mkdir(&cdir)?;
        for (i, c) in result.chunk_outputs.iter().enumerate() {
            write_fvt(&cdir.join(format!("chunk_{i:03}.fvt")), c)?;
        }
        write_json(&out.join("provenance.json"), &result.provenance)?;
        write_fvt(&out.join("crops_out.fvt"), &result.video)?;
        Ok(result)
    })()
    .map_err(|e: Error| e.in_stage("stitch"))?;

    let video = (|| {
        let back: Vec<Frame> = result
            .video
            .frames()
            .zip(&regions)
            .map(|(f, r)| resample(&f, 0.0, 0.0, w as f32, h as f32, r.h, r.w))
            .collect();
        let v = paste_back(source, &back, &regions, &full_mask)?;
        write_fvt(&out.join("output.fvt"), &v)?;
        Ok(v)
    })()
    .map_err(|e: Error| e.in_stage("paste"))?;

    let report = (|| {
        let suite = ExtractorSuite::default();
        let settings = EvalSettings {
            frames_per_video: cfg.eval_frames.min(t),
            seed: cfg.seed,
        };
        let src = source.clone().without_meta();
        let row = evaluate_method(
            &[EvalCase {
                result: &video,
                source: &src,
                target,
            }],
            &suite,
            &settings,
        )?;
        let report = MetricReport::new(vec![("keyswap".into(), row)], 1, settings.frames_per_video)?;
        write_json(&out.join("report.json"), &report)?;
        fs::write(out.join("report.txt"), report.rank_table()).map_err(|e| Error::io(out.join("report.txt"), e))?;
        Ok(report)
    })()
    .map_err(|e: Error| e.in_stage("evaluate"))?;

    Ok(SwapOutput {
        result,
        video,
        regions,
        keyframes: records,
        plan,
        report,
    })
}
