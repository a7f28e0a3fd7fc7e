use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{RunConfig, SplitHalf};
use crate::codec::LinearCodec;
use crate::conditioning::PackMode;
use crate::error::{ensure, Error, Result};
use crate::flow::{Checkpoint, TrainExample, Trainer};
use crate::forge::{load_pair, read_manifest, split_by_similarity, ManifestEntry};
use crate::model::VelocityModel;

pub const CHECKPOINT_FILE: &str = "checkpoint.ksck";
pub const LOSS_FILE: &str = "loss.csv";

pub fn mode_dir_name(mode: PackMode) -> &'static str {
    match mode {
        PackMode::Reference => "reference",
        PackMode::Inpainting => "inpainting",
        PackMode::NoKeyframe => "no_keyframe",
        PackMode::NoTargetImage => "no_target_image",
    }
}

/// Manifest entries selected by the configured similarity split.
pub fn selected_entries(cfg: &RunConfig, entries: Vec<ManifestEntry>) -> Result<Vec<ManifestEntry>> {
    let Some(f) = cfg.split_fraction else {
        return Ok(entries);
    };
    let split = split_by_similarity(&entries, f, cfg.split_direction)?;
    let half = match cfg.split_half {
        SplitHalf::Lower => split.lower,
        SplitHalf::Upper => split.upper,
    };
    Ok(half.into_iter().cloned().collect())
}

/// Training windows of every selected pair in the dataset at `cfg.data`.
pub fn training_examples(cfg: &RunConfig, mode: PackMode) -> Result<Vec<TrainExample<f32>>> {
    let root = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("`data` must point at a forged dataset".into()))?;
    let entries = selected_entries(cfg, read_manifest(root)?)?;
    ensure!(!entries.is_empty(), Config, "dataset at {} has no pairs", root.display());
    let codec = LinearCodec::new(cfg.codec_config())?;
    let mut out = Vec::new();
    for e in &entries {
        let pair = load_pair(root, e)?;
        ensure!(
            (pair.gt_video.height(), pair.gt_video.width()) == (cfg.height, cfg.width),
            Config,
            "pair {} is {}x{}, model resolution is {}x{}",
            e.pair_id,
            pair.gt_video.height(),
            pair.gt_video.width(),
            cfg.height,
            cfg.width
        );
        out.extend(pair.training_windows(&codec, cfg.window, cfg.train_stride, mode, cfg.placement)?);
    }
    Ok(out)
}

fn run_info(cfg: &RunConfig, mode: PackMode) -> serde_json::Value {
    serde_json::json!({
        "codec": cfg.codec_config(),
        "window": cfg.window,
        "mode": mode,
        "placement": cfg.placement,
    })
}

/// Writes through a temporary file so an interrupted save never replaces
/// the previous checkpoint with a partial one.
fn save_checkpoint(trainer: &Trainer<f32>, cfg: &RunConfig, mode: PackMode, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        model: trainer.model.clone(),
        train: Some(trainer.config),
        run: run_info(cfg, mode),
        optimizer: Some(trainer.state.clone()),
    };
    let tmp = path.with_extension("tmp");
    ck.save(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub mode: PackMode,
    pub checkpoint: PathBuf,
    /// `(step, loss)` for every step run in this call.
    pub losses: Vec<(u64, f64)>,
}

/// Trains one model per configured mode. With several modes each gets its
/// own subdirectory of `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<Vec<TrainRun>> {
    let mut runs = Vec::new();
    for &mode in &cfg.modes {
        let dir = if cfg.modes.len() > 1 {
            out.join(mode_dir_name(mode))
        } else {
            out.to_path_buf()
        };
        runs.push(train_mode(cfg, mode, &dir)?);
    }
    Ok(runs)
}

fn train_mode(cfg: &RunConfig, mode: PackMode, dir: &Path) -> Result<TrainRun> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let examples = training_examples(cfg, mode).map_err(|e| e.in_stage("load-data"))?;
    let mut trainer = match &cfg.resume {
        Some(p) => {
            let ck = Checkpoint::<f32>::load(p).map_err(|e| e.in_stage("resume"))?;
            let state = ck
                .optimizer
                .ok_or_else(|| Error::Config(format!("{} has no optimizer state to resume from", p.display())))?;
            Trainer {
                model: ck.model,
                state,
                config: cfg.train_config(),
            }
        }
        None => Trainer::new(VelocityModel::new(cfg.model_config())?, cfg.train_config()),
    };
    let ck_path = dir.join(CHECKPOINT_FILE);
    let loss_path = dir.join(LOSS_FILE);
    let fresh = cfg.resume.is_none() || !loss_path.exists();
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&loss_path)
        .map_err(|e| Error::io(&loss_path, e))?;
    if fresh {
        writeln!(log, "step,loss").map_err(|e| Error::io(&loss_path, e))?;
    }
    let mut losses = Vec::new();
    while trainer.step_count() < trainer.config.steps {
        match trainer.step(&examples) {
            Ok(l) => {
                let step = trainer.step_count();
                losses.push((step, l as f64));
                writeln!(log, "{step},{l}").map_err(|e| Error::io(&loss_path, e))?;
                if step % cfg.checkpoint_every == 0 {
                    save_checkpoint(&trainer, cfg, mode, &ck_path)?;
                }
            }
            Err(e) => {
                // The failed update was not applied, so the current state is
                // the last good one.
                save_checkpoint(&trainer, cfg, mode, &ck_path)?;
                return Err(e.in_stage("train"));
            }
        }
    }
    save_checkpoint(&trainer, cfg, mode, &ck_path)?;
    Ok(TrainRun {
        mode,
        checkpoint: ck_path,
        losses,
    })
}
