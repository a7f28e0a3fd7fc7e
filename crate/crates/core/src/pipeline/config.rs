//! Flat `key = value` run configuration shared by every subcommand.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! (including command-line overrides) replace earlier ones.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::CodecConfig;
use crate::conditioning::{PackMode, TargetPlacement};
use crate::error::{ensure, Error, Result};
use crate::flow::{AdamW, TimestepDist, TrainConfig};
use crate::forge::{BenchConfig, ForgeConfig, SortDirection, SwapperKind};
use crate::model::ModelConfig;
use crate::stitch::{AuxConfig, EndGuidance, Fill, GenConfig, InitLatent, KeyframeStrategy, StitchOptions};
use crate::synthkit::CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitHalf {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub frames: usize,
    /// Model (crop) resolution.
    pub height: usize,
    pub width: usize,
    /// Resolution of synthetic source videos before detection and cropping.
    pub source_height: usize,
    pub source_width: usize,
    pub window: usize,

    pub codec_patch: usize,
    pub codec_seed: u64,

    pub model_width: usize,
    pub model_depth: usize,
    pub model_heads: usize,
    pub model_group: usize,
    pub model_mlp_ratio: usize,
    pub model_encoder_depth: usize,
    pub model_seed: u64,

    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub train_steps: u64,
    pub timestep: TimestepDist,
    pub train_stride: usize,
    pub checkpoint_every: u64,
    pub resume: Option<PathBuf>,

    pub modes: Vec<PackMode>,
    pub placement: TargetPlacement,

    pub keyframe_strategy: KeyframeStrategy,
    pub keyframe_budget: usize,
    pub keyframes: Option<Vec<usize>>,
    pub keyframe_dir: Option<PathBuf>,

    pub sample_steps: usize,
    pub init: InitLatent,
    pub grayscale: bool,
    pub injection_scale: f64,
    pub copy_through: bool,
    pub end_guidance: bool,
    pub fill: Fill,
    pub frame_skip: bool,
    pub reverse: bool,

    pub feather: f32,
    pub crop_inflate: f32,
    pub mask_dilate: usize,

    pub pairs: usize,
    pub swapper: SwapperKind,
    pub failure_prob: f64,
    pub artifact_strength: f32,
    pub split_fraction: Option<f64>,
    pub split_direction: SortDirection,
    pub split_half: SplitHalf,

    pub bench_cases: usize,
    pub bench_pool: usize,
    pub eval_frames: usize,

    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub bench: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub source_seed: u64,
    pub target: Option<PathBuf>,
    pub target_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = AdamW::default();
        Self {
            seed: 0,
            frames: 65,
            height: 32,
            width: 32,
            source_height: 48,
            source_width: 48,
            window: 9,
            codec_patch: 4,
            codec_seed: 0,
            model_width: 64,
            model_depth: 4,
            model_heads: 4,
            model_group: 2,
            model_mlp_ratio: 4,
            model_encoder_depth: 2,
            model_seed: 0,
            lr: opt.lr,
            weight_decay: opt.weight_decay,
            batch: 2,
            train_steps: 2000,
            timestep: TimestepDist::LogitNormal { mean: 0.0, std: 1.0 },
            train_stride: 2,
            checkpoint_every: 500,
            resume: None,
            modes: vec![PackMode::Reference],
            placement: TargetPlacement::First,
            keyframe_strategy: KeyframeStrategy::Uniform,
            keyframe_budget: 9,
            keyframes: None,
            keyframe_dir: None,
            sample_steps: 8,
            init: InitLatent::Noise,
            grayscale: false,
            injection_scale: 1.0,
            copy_through: true,
            end_guidance: true,
            fill: Fill::Exact,
            frame_skip: true,
            reverse: false,
            feather: 2.0,
            crop_inflate: 0.2,
            mask_dilate: 1,
            pairs: 8,
            swapper: SwapperKind::Oracle,
            failure_prob: 0.1,
            artifact_strength: 0.05,
            split_fraction: None,
            split_direction: SortDirection::Ascending,
            split_half: SplitHalf::Lower,
            bench_cases: 4,
            bench_pool: 16,
            eval_frames: 10,
            data: None,
            checkpoint: None,
            bench: None,
            source: None,
            source_seed: 7,
            target: None,
            target_seed: 8,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn parse_swapper(v: &str) -> Result<SwapperKind> {
    match v {
        "oracle" => Ok(SwapperKind::Oracle),
        "noisy" => Ok(SwapperKind::Noisy),
        _ => Err(Error::Config(format!("`swapper`: unknown swapper `{v}`"))),
    }
}

fn parse_init(v: &str) -> Result<InitLatent> {
    match v {
        "noise" => Ok(InitLatent::Noise),
        "source" => Ok(InitLatent::Source),
        _ => Err(Error::Config(format!("`init`: expected noise or source, got `{v}`"))),
    }
}

fn mode_name(m: PackMode) -> &'static str {
    match m {
        PackMode::Reference => "reference",
        PackMode::Inpainting => "inpainting",
        PackMode::NoKeyframe => "no_keyframe",
        PackMode::NoTargetImage => "no_target_image",
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "frames" => self.frames = parse(key, v)?,
            "height" => self.height = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "source_height" => self.source_height = parse(key, v)?,
            "source_width" => self.source_width = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "codec_patch" => self.codec_patch = parse(key, v)?,
            "codec_seed" => self.codec_seed = parse(key, v)?,
            "model_width" => self.model_width = parse(key, v)?,
            "model_depth" => self.model_depth = parse(key, v)?,
            "model_heads" => self.model_heads = parse(key, v)?,
            "model_group" => self.model_group = parse(key, v)?,
            "model_mlp_ratio" => self.model_mlp_ratio = parse(key, v)?,
            "model_encoder_depth" => self.model_encoder_depth = parse(key, v)?,
            "model_seed" => self.model_seed = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "train_steps" => self.train_steps = parse(key, v)?,
            "timestep" => self.timestep = TimestepDist::parse(v)?,
            "train_stride" => self.train_stride = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "resume" => self.resume = parse_path(v),
            "mode" => {
                self.modes = v.split(',').map(|m| m.trim().parse()).collect::<Result<_>>()?;
            }
            "placement" => self.placement = v.parse()?,
            "keyframe_strategy" => self.keyframe_strategy = v.parse()?,
            "keyframe_budget" => self.keyframe_budget = parse(key, v)?,
            "keyframes" => {
                self.keyframes = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(v.split(',').map(|k| parse(key, k.trim())).collect::<Result<_>>()?)
                }
            }
            "keyframe_dir" => self.keyframe_dir = parse_path(v),
            "sample_steps" => self.sample_steps = parse(key, v)?,
            "init" => self.init = parse_init(v)?,
            "grayscale" => self.grayscale = parse_bool(key, v)?,
            "injection_scale" => self.injection_scale = parse(key, v)?,
            "copy_through" => self.copy_through = parse_bool(key, v)?,
            "end_guidance" => self.end_guidance = parse_bool(key, v)?,
            "fill" => self.fill = v.parse()?,
            "frame_skip" => self.frame_skip = parse_bool(key, v)?,
            "reverse" => self.reverse = parse_bool(key, v)?,
            "feather" => self.feather = parse(key, v)?,
            "crop_inflate" => self.crop_inflate = parse(key, v)?,
            "mask_dilate" => self.mask_dilate = parse(key, v)?,
            "pairs" => self.pairs = parse(key, v)?,
            "swapper" => self.swapper = parse_swapper(v)?,
            "failure_prob" => self.failure_prob = parse(key, v)?,
            "artifact_strength" => self.artifact_strength = parse(key, v)?,
            "split_fraction" => {
                self.split_fraction = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "split_direction" => self.split_direction = v.parse()?,
            "split_half" => {
                self.split_half = match v {
                    "lower" => SplitHalf::Lower,
                    "upper" => SplitHalf::Upper,
                    _ => return Err(Error::Config(format!("`split_half`: expected lower or upper, got `{v}`"))),
                }
            }
            "bench_cases" => self.bench_cases = parse(key, v)?,
            "bench_pool" => self.bench_pool = parse(key, v)?,
            "eval_frames" => self.eval_frames = parse(key, v)?,
            "data" => self.data = parse_path(v),
            "checkpoint" => self.checkpoint = parse_path(v),
            "bench" => self.bench = parse_path(v),
            "source" => self.source = parse_path(v),
            "source_seed" => self.source_seed = parse(key, v)?,
            "target" => self.target = parse_path(v),
            "target_seed" => self.target_seed = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the file (if any), then `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.frames >= 2, Config, "frames must be at least 2");
        ensure!(self.window >= 3, Config, "window must be at least 3");
        ensure!(self.codec_patch > 0, Config, "codec_patch must be positive");
        ensure!(
            self.height.is_multiple_of(self.codec_patch * self.model_group)
                && self.width.is_multiple_of(self.codec_patch * self.model_group),
            Config,
            "{}x{} is not divisible by patch {} x group {}",
            self.height,
            self.width,
            self.codec_patch,
            self.model_group
        );
        ensure!(
            self.source_height >= self.height.min(8) && self.source_width >= self.width.min(8),
            Config,
            "source resolution too small"
        );
        self.model_config().validate()?;
        ensure!(self.lr > 0.0 && self.lr.is_finite(), Config, "lr must be positive");
        ensure!(self.batch > 0, Config, "batch must be positive");
        ensure!(self.train_stride > 0, Config, "train_stride must be positive");
        ensure!(self.checkpoint_every > 0, Config, "checkpoint_every must be positive");
        ensure!(!self.modes.is_empty(), Config, "at least one mode is required");
        ensure!(
            self.keyframe_budget >= 2 && self.keyframe_budget <= self.frames,
            Config,
            "keyframe_budget {} invalid for {} frames",
            self.keyframe_budget,
            self.frames
        );
        if let Some(k) = &self.keyframes {
            crate::stitch::validate_indices(k, self.frames)?;
        }
        ensure!(self.sample_steps > 0, Config, "sample_steps must be positive");
        ensure!(
            self.feather >= 0.0 && self.feather.is_finite(),
            Config,
            "feather must be non-negative"
        );
        ensure!(
            self.crop_inflate >= 0.0 && self.crop_inflate.is_finite(),
            Config,
            "crop_inflate must be non-negative"
        );
        if let Some(f) = self.split_fraction {
            ensure!(f > 0.0 && f < 1.0, Config, "split_fraction {f} outside (0, 1)");
        }
        ensure!(self.eval_frames > 0, Config, "eval_frames must be positive");
        self.forge_config().validate()?;
        ensure!(self.bench_pool >= 2, Config, "bench_pool must be at least 2");
        ensure!(self.bench_cases > 0, Config, "bench_cases must be positive");
        Ok(())
    }

    pub fn codec_config(&self) -> CodecConfig {
        CodecConfig {
            patch: self.codec_patch,
            dim: self.codec_patch * self.codec_patch * CHANNELS,
            seed: self.codec_seed,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            latent_dim: self.codec_patch * self.codec_patch * CHANNELS,
            group: self.model_group,
            width: self.model_width,
            heads: self.model_heads,
            depth: self.model_depth,
            mlp_ratio: self.model_mlp_ratio,
            encoder_depth: self.model_encoder_depth,
            seed: self.model_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train_steps,
            batch_size: self.batch,
            seed: self.seed,
            timestep: self.timestep,
            optimizer: AdamW {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamW::default()
            },
        }
    }

    pub fn gen_config(&self, mode: PackMode) -> GenConfig {
        GenConfig {
            steps: self.sample_steps,
            init: self.init,
            mode,
            placement: self.placement,
            grayscale: self.grayscale,
            injection_scale: self.injection_scale,
            seed: self.seed,
        }
    }

    pub fn aux_config(&self) -> AuxConfig {
        AuxConfig {
            fill: self.fill,
            frame_skip: self.frame_skip,
            reverse: self.reverse,
        }
    }

    pub fn stitch_options(&self) -> StitchOptions {
        StitchOptions {
            copy_through: self.copy_through,
            end_guidance: if self.end_guidance {
                EndGuidance::Enabled
            } else {
                EndGuidance::Disabled
            },
        }
    }

    pub fn forge_config(&self) -> ForgeConfig {
        ForgeConfig {
            pairs: self.pairs,
            seed: self.seed,
            frames: self.frames,
            height: self.height,
            width: self.width,
            keyframes: self.keyframe_budget,
            swapper: self.swapper,
            failure_prob: self.failure_prob,
            artifact_strength: self.artifact_strength,
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            cases: self.bench_cases,
            pool: self.bench_pool,
            seed: self.seed,
            frames: self.frames,
            height: self.source_height,
            width: self.source_width,
        }
    }

    /// The resolved configuration in the same flat format it is read from.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let timestep = match self.timestep {
            TimestepDist::Uniform => "uniform".to_string(),
            TimestepDist::LogitNormal { mean, std } => format!("logit_normal({mean},{std})"),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("frames", self.frames.to_string());
        kv("height", self.height.to_string());
        kv("width", self.width.to_string());
        kv("source_height", self.source_height.to_string());
        kv("source_width", self.source_width.to_string());
        kv("window", self.window.to_string());
        kv("codec_patch", self.codec_patch.to_string());
        kv("codec_seed", self.codec_seed.to_string());
        kv("model_width", self.model_width.to_string());
        kv("model_depth", self.model_depth.to_string());
        kv("model_heads", self.model_heads.to_string());
        kv("model_group", self.model_group.to_string());
        kv("model_mlp_ratio", self.model_mlp_ratio.to_string());
        kv("model_encoder_depth", self.model_encoder_depth.to_string());
        kv("model_seed", self.model_seed.to_string());
        kv("lr", self.lr.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("batch", self.batch.to_string());
        kv("train_steps", self.train_steps.to_string());
        kv("timestep", timestep);
        kv("train_stride", self.train_stride.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("resume", path(&self.resume));
        kv(
            "mode",
            self.modes.iter().map(|&m| mode_name(m)).collect::<Vec<_>>().join(","),
        );
        kv("placement", json_str(&self.placement));
        kv("keyframe_strategy", json_str(&self.keyframe_strategy));
        kv("keyframe_budget", self.keyframe_budget.to_string());
        kv(
            "keyframes",
            self.keyframes.as_ref().map_or("none".to_string(), |k| {
                k.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            }),
        );
        kv("keyframe_dir", path(&self.keyframe_dir));
        kv("sample_steps", self.sample_steps.to_string());
        kv("init", json_str(&self.init));
        kv("grayscale", self.grayscale.to_string());
        kv("injection_scale", self.injection_scale.to_string());
        kv("copy_through", self.copy_through.to_string());
        kv("end_guidance", self.end_guidance.to_string());
        kv("fill", json_str(&self.fill));
        kv("frame_skip", self.frame_skip.to_string());
        kv("reverse", self.reverse.to_string());
        kv("feather", self.feather.to_string());
        kv("crop_inflate", self.crop_inflate.to_string());
        kv("mask_dilate", self.mask_dilate.to_string());
        kv("pairs", self.pairs.to_string());
        kv("swapper", json_str(&self.swapper));
        kv("failure_prob", self.failure_prob.to_string());
        kv("artifact_strength", self.artifact_strength.to_string());
        kv("split_fraction", self.split_fraction.map_or("none".to_string(), |f| f.to_string()));
        kv("split_direction", json_str(&self.split_direction));
        kv("split_half", json_str(&self.split_half));
        kv("bench_cases", self.bench_cases.to_string());
        kv("bench_pool", self.bench_pool.to_string());
        kv("eval_frames", self.eval_frames.to_string());
        kv("data", path(&self.data));
        kv("checkpoint", path(&self.checkpoint));
        kv("bench", path(&self.bench));
        kv("source", path(&self.source));
        kv("source_seed", self.source_seed.to_string());
        kv("target", path(&self.target));
        kv("target_seed", self.target_seed.to_string());
        s
    }
}

/// Snake-case name of a unit enum variant, taken from its serde form.
fn json_str<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# comment\nwindow = 5\nlr=0.001\nmode = reference, no_keyframe\n\n").unwrap();
        let c = RunConfig::load(Some(&p), &["window=7".into(), "reverse=yes".into()]).unwrap();
        assert_eq!(c.window, 7);
        assert_eq!(c.lr, 0.001);
        assert!(c.reverse);
        assert_eq!(c.modes, vec![PackMode::Reference, PackMode::NoKeyframe]);
    }

    #[test]
    fn text_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("keyframes = 0,8,64\nsplit_fraction = 0.3\nsplit_half = upper\nfill = interpolate\ntimestep = uniform")
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_values_are_caught_at_load() {
        assert!(RunConfig::load(None, &["nope=1".into()]).is_err());
        assert!(RunConfig::load(None, &["window=2".into()]).is_err());
        assert!(RunConfig::load(None, &["keyframes=0,70".into()]).is_err());
        assert!(RunConfig::load(None, &["height=30".into()]).is_err());
        assert!(RunConfig::load(None, &["copy_through=maybe".into()]).is_err());
        assert!(RunConfig::load(None, &["window".into()]).is_err());
    }
}
