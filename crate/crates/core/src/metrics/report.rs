use rand::Rng;
use serde::{Deserialize, Serialize};

use super::extract::{cosine, l2, ExtractorSuite, Route};
use super::frechet::frechet_distance;
use super::rank::{average_rank, Direction};
use crate::error::{ensure, Result};
use crate::rng::rng_for;
use crate::synthkit::{Frame, VideoTensor};

const SAMPLE_STREAM: u64 = 0xE7A1;

/// `k` distinct frame indices drawn uniformly without replacement, sorted.
pub fn sample_eval_frames(frames: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    ensure!(k <= frames, InvalidArgument, "cannot sample {k} frames from {frames}");
    let mut idx = rand::seq::index::sample(rng, frames, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn check_counts(a: &[Frame], b: &[Frame]) -> Result<()> {
    ensure!(!a.is_empty(), InvalidArgument, "no frames to compare");
    ensure!(a.len() == b.len(), Shape, "{} result frames vs {} source frames", a.len(), b.len());
    Ok(())
}

fn pair_route(a: &[Frame], b: &[Frame]) -> Route {
    Route::for_frames(a.iter().chain(b))
}

/// Mean cosine between each result frame's identity vector and the target's.
pub fn id_similarity(results: &[Frame], target: &Frame, suite: &ExtractorSuite) -> Result<f64> {
    ensure!(!results.is_empty(), InvalidArgument, "no frames to compare");
    let route = Route::for_frames(results.iter().chain(std::iter::once(target)));
    let t = suite.id_embedding(target, route);
    Ok(results.iter().map(|f| cosine(&suite.id_embedding(f, route), &t)).sum::<f64>() / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Expression,
    Lighting,
}

/// Mean per-frame Euclidean distance between coefficient vectors.
pub fn coeff_l2(results: &[Frame], sources: &[Frame], which: Coefficient, suite: &ExtractorSuite) -> Result<f64> {
    check_counts(results, sources)?;
    let route = pair_route(results, sources);
    let f = |x: &Frame| match which {
        Coefficient::Expression => suite.expression(x, route),
        Coefficient::Lighting => suite.lighting(x, route),
    };
    Ok(results.iter().zip(sources).map(|(a, b)| l2(&f(a), &f(b))).sum::<f64>() / results.len() as f64)
}

pub fn gaze_similarity(results: &[Frame], sources: &[Frame], suite: &ExtractorSuite) -> Result<f64> {
    check_counts(results, sources)?;
    let route = pair_route(results, sources);
    Ok(results
        .iter()
        .zip(sources)
        .map(|(a, b)| cosine(&suite.gaze(a, route), &suite.gaze(b, route)))
        .sum::<f64>()
        / results.len() as f64)
}

pub fn pose_error(results: &[Frame], sources: &[Frame], suite: &ExtractorSuite) -> Result<f64> {
    check_counts(results, sources)?;
    let route = pair_route(results, sources);
    Ok(results
        .iter()
        .zip(sources)
        .map(|(a, b)| l2(&suite.pose(a, route), &suite.pose(b, route)))
        .sum::<f64>()
        / results.len() as f64)
}

pub const METRIC_NAMES: [&str; 6] = ["id_sim", "expr_err", "light_err", "gaze_sim", "pose_err", "fvd"];

pub const DIRECTIONS: [Direction; 6] = [
    Direction::HigherIsBetter,
    Direction::LowerIsBetter,
    Direction::LowerIsBetter,
    Direction::HigherIsBetter,
    Direction::LowerIsBetter,
    Direction::LowerIsBetter,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id_sim: f64,
    pub expr_err: f64,
    pub light_err: f64,
    pub gaze_sim: f64,
    pub pose_err: f64,
    pub fvd: f64,
}

impl MetricRow {
    pub fn values(&self) -> [f64; 6] {
        [self.id_sim, self.expr_err, self.light_err, self.gaze_sim, self.pose_err, self.fvd]
    }
}

/// One evaluated video: the swap result, the source it was made from, and
/// the target identity image.
pub struct EvalCase<'a> {
    pub result: &'a VideoTensor,
    pub source: &'a VideoTensor,
    pub target: &'a Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Frames sampled per video for the frame-level metrics.
    pub frames_per_video: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            frames_per_video: 10,
            seed: 0,
        }
    }
}

/// Frame metrics averaged over cases; the Fréchet distance compares all
/// result videos against all source videos.
pub fn evaluate_method(cases: &[EvalCase<'_>], suite: &ExtractorSuite, settings: &EvalSettings) -> Result<MetricRow> {
    ensure!(!cases.is_empty(), InvalidArgument, "no videos to evaluate");
    let mut acc = [0f64; 5];
    let mut res_feats = Vec::with_capacity(cases.len());
    let mut src_feats = Vec::with_capacity(cases.len());
    for (i, c) in cases.iter().enumerate() {
        ensure!(
            c.result.dims() == c.source.dims(),
            Shape,
            "result {:?} and source {:?} differ in shape",
            c.result.dims(),
            c.source.dims()
        );
        let mut rng = rng_for(settings.seed ^ SAMPLE_STREAM, i as u64);
        let k = settings.frames_per_video.min(c.result.len());
        let idx = sample_eval_frames(c.result.len(), k, &mut rng)?;
        let res: Vec<Frame> = idx.iter().map(|&t| c.result.frame(t)).collect();
        let src: Vec<Frame> = idx.iter().map(|&t| c.source.frame(t)).collect();
        acc[0] += id_similarity(&res, c.target, suite)?;
        acc[1] += coeff_l2(&res, &src, Coefficient::Expression, suite)?;
        acc[2] += coeff_l2(&res, &src, Coefficient::Lighting, suite)?;
        acc[3] += gaze_similarity(&res, &src, suite)?;
        acc[4] += pose_error(&res, &src, suite)?;
        res_feats.push(suite.video_feature(&c.result.frames().collect::<Vec<_>>()));
        src_feats.push(suite.video_feature(&c.source.frames().collect::<Vec<_>>()));
    }
    let n = cases.len() as f64;
    Ok(MetricRow {
        id_sim: acc[0] / n,
        expr_err: acc[1] / n,
        light_err: acc[2] / n,
        gaze_sim: acc[3] / n,
        pose_err: acc[4] / n,
        fvd: frechet_distance(&res_feats, &src_feats)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    #[serde(flatten)]
    pub scores: MetricRow,
    pub avg_rank: f64,
}

/// Scores for every method plus their average rank across all six metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<String>,
    pub directions: Vec<Direction>,
    pub videos: usize,
    pub frames_per_video: usize,
    pub methods: Vec<MethodScores>,
}

impl MetricReport {
    pub fn new(rows: Vec<(String, MetricRow)>, videos: usize, frames_per_video: usize) -> Result<Self> {
        let table: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.values().to_vec()).collect();
        let ranks = average_rank(&table, &DIRECTIONS)?;
        Ok(Self {
            metrics: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
            directions: DIRECTIONS.to_vec(),
            videos,
            frames_per_video,
            methods: rows
                .into_iter()
                .zip(ranks)
                .map(|((method, scores), avg_rank)| MethodScores {
                    method,
                    scores,
                    avg_rank,
                })
                .collect(),
        })
    }

    /// Plain-text table, one method per line.
    pub fn rank_table(&self) -> String {
        let mut s = format!("{:<16}", "method");
        for m in &self.metrics {
            s.push_str(&format!("{m:>11}"));
        }
        s.push_str(&format!("{:>10}\n", "avg_rank"));
        for m in &self.methods {
            s.push_str(&format!("{:<16}", m.method));
            for v in m.scores.values() {
                s.push_str(&format!("{v:>11.4}"));
            }
            s.push_str(&format!("{:>10.2}\n", m.avg_rank));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_eval_frames(5, 5, &mut rng).unwrap(), [0, 1, 2, 3, 4]);
        assert!(sample_eval_frames(5, 6, &mut rng).is_err());
        let a = sample_eval_frames(50, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_eval_frames(50, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let s = ExtractorSuite::default();
        let f = vec![Frame::black(8, 8)];
        assert!(pose_error(&f, &[], &s).is_err());
    }
}
