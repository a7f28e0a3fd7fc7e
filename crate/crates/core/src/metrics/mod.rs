//! Evaluation metrics: identity similarity, attribute errors, gaze, pose,
//! Fréchet video distance and average rank.

mod extract;
mod frechet;
mod rank;
mod report;

pub use extract::{chroma_embedding, cosine, l2, pooled_pixels, ExtractorSuite, Route};
pub use frechet::{frechet_distance, frechet_gaussian, Gaussian, SHRINKAGE};
pub use rank::{average_rank, rank_column, Direction};
pub use report::{
    coeff_l2, evaluate_method, gaze_similarity, id_similarity, pose_error, sample_eval_frames, Coefficient, EvalCase,
    EvalSettings, MethodScores, MetricReport, MetricRow, DIRECTIONS, METRIC_NAMES,
};
