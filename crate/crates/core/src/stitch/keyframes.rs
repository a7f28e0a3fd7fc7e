use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::metrics::{l2, pooled_pixels};
use crate::synthkit::{Frame, VideoTensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeStrategy {
    #[default]
    Uniform,
    /// Farthest-point selection on appearance features.
    Greedy,
}

impl std::str::FromStr for KeyframeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "greedy" => Ok(Self::Greedy),
            _ => Err(Error::Config(format!("unknown keyframe strategy `{s}`"))),
        }
    }
}

/// Appearance descriptor used to spot pose, expression and lighting
/// changes: average-pooled pixels.
pub fn appearance_feature(f: &Frame) -> Vec<f64> {
    pooled_pixels(f)
}

/// Chooses `budget` keyframe indices (zero-based, ascending). The first and
/// last frames are always included.
pub fn select_keyframes(video: &VideoTensor, budget: usize, strategy: KeyframeStrategy) -> Result<Vec<usize>> {
    let t = video.len();
    ensure!(budget >= 2, InvalidArgument, "keyframe budget must be at least 2, got {budget}");
    ensure!(budget <= t, InvalidArgument, "keyframe budget {budget} exceeds {t} frames");
    match strategy {
        KeyframeStrategy::Uniform => Ok(uniform_keyframes(t, budget)),
        KeyframeStrategy::Greedy => {
            let feats: Vec<Vec<f64>> = video.frames().map(|f| appearance_feature(&f)).collect();
            Ok(greedy_keyframes(&feats, budget))
        }
    }
}

/// `round(i·(T−1)/(budget−1))` for `i = 0..budget`.
pub fn uniform_keyframes(frames: usize, budget: usize) -> Vec<usize> {
    let mut k: Vec<usize> = (0..budget)
        .map(|i| ((i * (frames - 1)) as f64 / (budget - 1) as f64).round() as usize)
        .collect();
    k.dedup();
    k
}

/// Endpoints first, then repeatedly the frame farthest from everything
/// already chosen (lowest index on ties).
pub fn greedy_keyframes(feats: &[Vec<f64>], budget: usize) -> Vec<usize> {
    let t = feats.len();
    let mut chosen = vec![0, t - 1];
    chosen.dedup();
    let mut nearest: Vec<f64> = (0..t)
        .map(|i| chosen.iter().map(|&c| l2(&feats[i], &feats[c])).fold(f64::INFINITY, f64::min))
        .collect();
    while chosen.len() < budget {
        let mut best = None;
        for i in 0..t {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|b: usize| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        chosen.push(b);
        for i in 0..t {
            nearest[i] = nearest[i].min(l2(&feats[i], &feats[b]));
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Keyframe indices with their edited frames.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeSet {
    indices: Vec<usize>,
    frames: Vec<Frame>,
}

impl KeyframeSet {
    pub fn new(indices: Vec<usize>, frames: Vec<Frame>, video_len: usize) -> Result<Self> {
        ensure!(indices.len() == frames.len(), Shape, "{} indices but {} frames", indices.len(), frames.len());
        validate_indices(&indices, video_len)?;
        let dims = frames[0].dims();
        ensure!(frames.iter().all(|f| f.dims() == dims), Shape, "keyframes differ in size");
        Ok(Self { indices, frames })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Frame> {
        self.indices.binary_search(&index).ok().map(|i| &self.frames[i])
    }
}

/// Strictly increasing, starts at 0, ends at `video_len − 1`.
pub fn validate_indices(indices: &[usize], video_len: usize) -> Result<()> {
    ensure!(video_len >= 2, InvalidArgument, "need at least two frames, got {video_len}");
    ensure!(indices.len() >= 2, InvalidArgument, "need at least two keyframes");
    ensure!(
        indices[0] == 0 && *indices.last().unwrap() == video_len - 1,
        InvalidArgument,
        "keyframes must include the first and last frame"
    );
    ensure!(
        indices.windows(2).all(|w| w[0] < w[1]),
        InvalidArgument,
        "keyframe indices must be strictly increasing"
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stride_arithmetic() {
        assert_eq!(uniform_keyframes(81, 2), [0, 80]);
        assert_eq!(uniform_keyframes(161, 3), [0, 80, 160]);
        assert_eq!(uniform_keyframes(4, 4), [0, 1, 2, 3]);
    }

    #[test]
    fn greedy_picks_the_outlier() {
        let mut feats = vec![vec![0.0, 0.0]; 20];
        for (i, f) in feats.iter_mut().enumerate() {
            f[0] = i as f64 * 0.01;
        }
        feats[7] = vec![5.0, 5.0];
        assert_eq!(greedy_keyframes(&feats, 3), [0, 7, 19]);
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(validate_indices(&[0, 5], 7).is_err());
        assert!(validate_indices(&[0, 3, 3, 6], 7).is_err());
        assert!(validate_indices(&[0, 6], 7).is_ok());
    }
}
