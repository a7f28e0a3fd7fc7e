use crate::error::{ensure, Result};
use crate::metrics::{cosine, ExtractorSuite, Route};
use crate::synthkit::{render_frame, Frame, IdentitySpec, NuisanceState, VideoTensor};

/// A source video with its most and least similar pool identities.
#[derive(Debug, Clone)]
pub struct BenchCase {
    pub source: VideoTensor,
    pub easy_index: usize,
    pub hard_index: usize,
    pub easy: IdentitySpec,
    pub hard: IdentitySpec,
    pub easy_target: Frame,
    pub hard_target: Frame,
    pub easy_score: f64,
    pub hard_score: f64,
}

/// Mean cosine between the source frames' identity vectors and the
/// identity's canonical vector.
pub fn identity_affinity(source: &VideoTensor, id: &IdentitySpec, suite: &ExtractorSuite) -> f64 {
    let (h, w) = (source.height(), source.width());
    let v = suite.identity_vector(id, h, w);
    let total: f64 = source
        .frames()
        .map(|f| cosine(&suite.id_embedding(&f, Route::Pixel), &v))
        .sum();
    total / source.len() as f64
}

/// Easy = argmax, hard = argmin of [`identity_affinity`] over the pool;
/// ties go to the lowest pool index.
pub fn select_easy_hard(source: &VideoTensor, pool: &[IdentitySpec], suite: &ExtractorSuite) -> Result<BenchCase> {
    ensure!(!pool.is_empty(), InvalidArgument, "identity pool is empty");
    ensure!(pool.len() >= 2, InvalidArgument, "identity pool needs at least 2 entries");
    ensure!(!source.is_empty(), InvalidArgument, "source video is empty");
    let scores: Vec<f64> = pool.iter().map(|id| identity_affinity(source, id, suite)).collect();
    let (mut easy, mut hard) = (0, 0);
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[easy] {
            easy = i;
        }
        if s < scores[hard] {
            hard = i;
        }
    }
    if easy == hard {
        // Every score is equal; keep the two targets distinct.
        hard = 1;
    }
    let (h, w) = (source.height(), source.width());
    let target = |id: &IdentitySpec| render_frame(id, &NuisanceState::NEUTRAL, h, w);
    Ok(BenchCase {
        source: source.clone(),
        easy_index: easy,
        hard_index: hard,
        easy_target: target(&pool[easy])?,
        hard_target: target(&pool[hard])?,
        easy: pool[easy].clone(),
        hard: pool[hard].clone(),
        easy_score: scores[easy],
        hard_score: scores[hard],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::{render_video, MotionProfile, NuisanceTrack};

    fn source(seed: u64) -> VideoTensor {
        let tr = NuisanceTrack::smooth(6, seed, MotionProfile::default()).unwrap();
        render_video(&IdentitySpec::from_seed(seed), &tr, 32, 32).unwrap()
    }

    #[test]
    fn own_identity_is_easiest() {
        let suite = ExtractorSuite::default();
        let src = source(42);
        let pool: Vec<IdentitySpec> = (0..10).map(|i| IdentitySpec::from_seed(i * 7 + 1)).chain([IdentitySpec::from_seed(42)]).collect();
        let c = select_easy_hard(&src, &pool, &suite).unwrap();
        assert_eq!(c.easy_index, 10);
        assert!(c.easy_score >= c.hard_score);
    }

    #[test]
    fn two_pool_entries_are_distinct() {
        let suite = ExtractorSuite::default();
        let src = source(1);
        let pool = vec![IdentitySpec::from_seed(2), IdentitySpec::from_seed(3)];
        let c = select_easy_hard(&src, &pool, &suite).unwrap();
        assert_ne!(c.easy_index, c.hard_index);
        let same = vec![IdentitySpec::from_seed(2), IdentitySpec::from_seed(2)];
        let c = select_easy_hard(&src, &same, &suite).unwrap();
        assert_eq!((c.easy_index, c.hard_index), (0, 1));
    }

    #[test]
    fn small_pools_are_rejected() {
        let suite = ExtractorSuite::default();
        assert!(select_easy_hard(&source(1), &[], &suite).is_err());
        assert!(select_easy_hard(&source(1), &[IdentitySpec::from_seed(2)], &suite).is_err());
    }
}
