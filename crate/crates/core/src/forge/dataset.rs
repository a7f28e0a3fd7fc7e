use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bench::select_easy_hard;
use super::pair::{forge_pair, SwapPair};
use super::split::Scored;
use crate::error::{ensure, Error, Result};
use crate::metrics::ExtractorSuite;
use crate::rng::{derive_seed, rng_for};
use crate::synthkit::{
    read_fvt, read_mask, render_video, write_fvt, write_mask, IdentitySpec, MotionProfile, NuisanceTrack, Swapper,
    VideoTensor,
};

const ORIGINAL_STREAM: u64 = 0x0816;
const DONOR_STREAM: u64 = 0xD090;
const MOTION_STREAM: u64 = 0x3071;
const SWAP_STREAM: u64 = 0x5A9;
const PICK_STREAM: u64 = 0x9C1;
const POOL_STREAM: u64 = 0x9001;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BENCH_FILE: &str = "bench.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapperKind {
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub pairs: usize,
    pub seed: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub keyframes: usize,
    pub swapper: SwapperKind,
    pub failure_prob: f64,
    pub artifact_strength: f32,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            pairs: 16,
            seed: 1,
            frames: 65,
            height: 32,
            width: 32,
            keyframes: 9,
            swapper: SwapperKind::Oracle,
            failure_prob: 0.1,
            artifact_strength: 0.05,
        }
    }
}

impl ForgeConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.pairs > 0, Config, "pairs must be positive");
        ensure!(self.frames >= 2, Config, "videos need at least 2 frames");
        ensure!(
            self.keyframes >= 2 && self.keyframes <= self.frames,
            Config,
            "keyframe budget {} invalid for {} frames",
            self.keyframes,
            self.frames
        );
        ensure!(
            (0.0..=1.0).contains(&self.failure_prob),
            Config,
            "failure_prob {} outside [0, 1]",
            self.failure_prob
        );
        ensure!(
            self.artifact_strength.is_finite() && self.artifact_strength >= 0.0,
            Config,
            "artifact_strength must be non-negative"
        );
        Ok(())
    }

    /// Seeds of pair `i`: (original identity, donor identity, motion).
    pub fn pair_seeds(&self, i: u64) -> (u64, u64, u64) {
        (
            derive_seed(self.seed, ORIGINAL_STREAM + 4 * i),
            derive_seed(self.seed, DONOR_STREAM + 4 * i),
            derive_seed(self.seed, MOTION_STREAM + 4 * i),
        )
    }

    pub fn swapper_for(&self, i: u64) -> Swapper {
        match self.swapper {
            SwapperKind::Oracle => Swapper::Oracle,
            SwapperKind::Noisy => Swapper::Noisy {
                failure_prob: self.failure_prob,
                artifact_strength: self.artifact_strength,
                seed: derive_seed(self.seed, SWAP_STREAM + 4 * i),
            },
        }
    }

    /// Renders the original video of pair `i` and forges it.
    pub fn forge(&self, i: u64) -> Result<SwapPair> {
        let (orig, donor, motion) = self.pair_seeds(i);
        let track = NuisanceTrack::smooth(self.frames, motion, MotionProfile::default())?;
        let video = render_video(&IdentitySpec::from_seed(orig), &track, self.height, self.width)?;
        forge_pair(
            i,
            &video,
            &IdentitySpec::from_seed(donor),
            self.swapper_for(i),
            self.keyframes,
            &mut rng_for(self.seed, PICK_STREAM + i),
        )
    }
}

/// One manifest record. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: u64,
    pub input_path: String,
    pub gt_path: String,
    pub mask_path: String,
    pub target_path: String,
    pub original_seed: u64,
    pub donor_seed: u64,
    pub motion_seed: u64,
    pub frames: usize,
    pub keyframe_indices: Vec<usize>,
    pub target_index: usize,
    pub similarity_score: f64,
    pub failed_frames: usize,
    pub swapper: Swapper,
}

impl Scored for ManifestEntry {
    fn pair_id(&self) -> u64 {
        self.pair_id
    }
    fn similarity(&self) -> f64 {
        self.similarity_score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub pair_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub config: ForgeConfig,
    pub requested: usize,
    pub written: usize,
    pub rejected: Vec<Skipped>,
    pub io_errors: Vec<Skipped>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub summary: DatasetSummary,
}

fn write_pair(root: &Path, p: &SwapPair, motion_seed: u64) -> Result<ManifestEntry> {
    let rel = format!("pairs/{:05}", p.pair_id);
    let dir = root.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let file = |name: &str| (format!("{rel}/{name}"), dir.join(name));
    let (input_path, ip) = file("input.fvt");
    let (gt_path, gp) = file("gt.fvt");
    let (mask_path, mp) = file("mask.fvt");
    let (target_path, tp) = file("target.fvt");
    write_fvt(&ip, &p.input_video)?;
    write_fvt(&gp, &p.gt_video)?;
    write_mask(&mp, &p.mask)?;
    write_fvt(&tp, &VideoTensor::from_frames(std::slice::from_ref(&p.target_image))?)?;
    Ok(ManifestEntry {
        pair_id: p.pair_id,
        input_path,
        gt_path,
        mask_path,
        target_path,
        original_seed: p.original.seed,
        donor_seed: p.donor.seed,
        motion_seed,
        frames: p.gt_video.len(),
        keyframe_indices: p.keyframe_indices.clone(),
        target_index: p.target_index,
        similarity_score: p.similarity_score,
        failed_frames: p.failed_frames,
        swapper: p.swapper,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Forges `config.pairs` pairs into `root`. Rejected pairs and per-item I/O
/// failures are listed in the summary; the run carries on past them.
pub fn build_dataset(config: &ForgeConfig, root: &Path) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    let mut io_errors = Vec::new();
    for i in 0..config.pairs as u64 {
        let pair = match config.forge(i) {
            Ok(p) => p,
            Err(Error::Rejected(reason)) => {
                rejected.push(Skipped { pair_id: i, reason });
                continue;
            }
            Err(e) => return Err(e),
        };
        pair.audit()?;
        match write_pair(root, &pair, config.pair_seeds(i).2) {
            Ok(e) => entries.push(e),
            Err(e) => {
                log::warn!("pair {i}: {e}");
                io_errors.push(Skipped {
                    pair_id: i,
                    reason: e.to_string(),
                });
            }
        }
    }
    let summary = DatasetSummary {
        config: config.clone(),
        requested: config.pairs,
        written: entries.len(),
        rejected,
        io_errors,
    };
    write_jsonl(&root.join(MANIFEST_FILE), &entries)?;
    let side = root.join(SUMMARY_FILE);
    fs::write(&side, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&side, e))?;
    Ok(Manifest { entries, summary })
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    read_jsonl(&root.join(MANIFEST_FILE))
}

/// Reassembles a pair from the files a manifest entry points at.
pub fn load_pair(root: &Path, e: &ManifestEntry) -> Result<SwapPair> {
    let path = |p: &str| -> PathBuf { root.join(p) };
    let input_video = read_fvt(&path(&e.input_path))?;
    let gt_video = read_fvt(&path(&e.gt_path))?;
    let mask = read_mask(&path(&e.mask_path))?;
    let target_image = read_fvt(&path(&e.target_path))?.frame(0);
    ensure!(
        e.keyframe_indices.iter().all(|&i| i < gt_video.len()) && e.target_index < gt_video.len(),
        Format,
        "pair {}: manifest indices exceed {} frames",
        e.pair_id,
        gt_video.len()
    );
    let pair = SwapPair {
        pair_id: e.pair_id,
        original: IdentitySpec::from_seed(e.original_seed),
        donor: IdentitySpec::from_seed(e.donor_seed),
        keyframes: e.keyframe_indices.iter().map(|&i| gt_video.frame(i)).collect(),
        keyframe_indices: e.keyframe_indices.clone(),
        target_index: e.target_index,
        target_image,
        similarity_score: e.similarity_score,
        failed_frames: e.failed_frames,
        swapper: e.swapper,
        input_video,
        gt_video,
        mask,
    };
    pair.audit()?;
    Ok(pair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub cases: usize,
    pub pool: usize,
    pub seed: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cases: 8,
            pool: 32,
            seed: 2,
            frames: 65,
            height: 32,
            width: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub case_id: u64,
    pub source_path: String,
    pub source_seed: u64,
    pub motion_seed: u64,
    pub easy_target_path: String,
    pub hard_target_path: String,
    pub easy_seed: u64,
    pub hard_seed: u64,
    pub easy_score: f64,
    pub hard_score: f64,
}

/// Identity pool shared by every case of a benchmark.
pub fn bench_pool(config: &BenchConfig) -> Vec<IdentitySpec> {
    (0..config.pool as u64)
        .map(|j| IdentitySpec::from_seed(derive_seed(config.seed, POOL_STREAM + j)))
        .collect()
}

/// Renders source videos and writes their easy and hard targets.
pub fn build_bench(config: &BenchConfig, root: &Path) -> Result<Vec<BenchEntry>> {
    ensure!(config.cases > 0, Config, "cases must be positive");
    ensure!(config.frames >= 1, Config, "videos need at least one frame");
    let pool = bench_pool(config);
    let suite = ExtractorSuite::default();
    let mut out = Vec::with_capacity(config.cases);
    for i in 0..config.cases as u64 {
        let source_seed = derive_seed(config.seed, ORIGINAL_STREAM + 4 * i);
        let motion_seed = derive_seed(config.seed, MOTION_STREAM + 4 * i);
        let track = NuisanceTrack::smooth(config.frames, motion_seed, MotionProfile::default())?;
        let src = render_video(&IdentitySpec::from_seed(source_seed), &track, config.height, config.width)?;
        let case = select_easy_hard(&src, &pool, &suite)?;
        let rel = format!("cases/{i:04}");
        let dir = root.join(&rel);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_fvt(&dir.join("source.fvt"), &src)?;
        write_fvt(&dir.join("easy.fvt"), &VideoTensor::from_frames(std::slice::from_ref(&case.easy_target))?)?;
        write_fvt(&dir.join("hard.fvt"), &VideoTensor::from_frames(std::slice::from_ref(&case.hard_target))?)?;
        out.push(BenchEntry {
            case_id: i,
            source_path: format!("{rel}/source.fvt"),
            source_seed,
            motion_seed,
            easy_target_path: format!("{rel}/easy.fvt"),
            hard_target_path: format!("{rel}/hard.fvt"),
            easy_seed: case.easy.seed,
            hard_seed: case.hard.seed,
            easy_score: case.easy_score,
            hard_score: case.hard_score,
        });
    }
    write_jsonl(&root.join(BENCH_FILE), &out)?;
    Ok(out)
}

pub fn read_bench(root: &Path) -> Result<Vec<BenchEntry>> {
    read_jsonl(&root.join(BENCH_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::pair_similarity;

    fn small() -> ForgeConfig {
        ForgeConfig {
            pairs: 4,
            frames: 6,
            height: 16,
            width: 16,
            keyframes: 3,
            ..ForgeConfig::default()
        }
    }

    #[test]
    fn manifests_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        build_dataset(&small(), a.path()).unwrap();
        build_dataset(&small(), b.path()).unwrap();
        let ma = fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, fs::read(b.path().join(MANIFEST_FILE)).unwrap());
        assert_eq!(ma.split(|&c| c == b'\n').filter(|l| !l.is_empty()).count(), 4);
    }

    #[test]
    fn scores_recompute_from_files() {
        let d = tempfile::tempdir().unwrap();
        let cfg = ForgeConfig {
            swapper: SwapperKind::Noisy,
            ..small()
        };
        build_dataset(&cfg, d.path()).unwrap();
        for e in read_manifest(d.path()).unwrap() {
            let p = load_pair(d.path(), &e).unwrap();
            assert_eq!(pair_similarity(&p.input_video, &p.gt_video).unwrap(), e.similarity_score);
        }
    }

    #[test]
    fn rejections_and_io_errors_do_not_stop_the_run() {
        let d = tempfile::tempdir().unwrap();
        fs::create_dir_all(d.path().join("pairs")).unwrap();
        fs::write(d.path().join("pairs/00001"), b"blocked").unwrap();
        let m = build_dataset(&small(), d.path()).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.summary.io_errors.len(), 1);
        assert_eq!(m.summary.io_errors[0].pair_id, 1);

        let all_fail = ForgeConfig {
            swapper: SwapperKind::Noisy,
            failure_prob: 1.0,
            ..small()
        };
        let e = tempfile::tempdir().unwrap();
        let m = build_dataset(&all_fail, e.path()).unwrap();
        assert_eq!(m.entries.len(), 0);
        assert_eq!(m.summary.rejected.len(), 4);
        assert_eq!(m.summary.written, m.summary.requested - m.summary.rejected.len());
    }

    #[test]
    fn bench_orders_targets() {
        let d = tempfile::tempdir().unwrap();
        let cfg = BenchConfig {
            cases: 2,
            pool: 5,
            frames: 4,
            height: 16,
            width: 16,
            ..BenchConfig::default()
        };
        let rows = build_bench(&cfg, d.path()).unwrap();
        assert_eq!(read_bench(d.path()).unwrap(), rows);
        for r in rows {
            assert!(r.easy_score >= r.hard_score);
            assert_ne!(r.easy_seed, r.hard_seed);
        }
    }
}
