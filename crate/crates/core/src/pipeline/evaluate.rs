use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::swap::{load_model, run_swap, OracleEditor};
use crate::error::{ensure, Error, Result};
use crate::forge::read_bench;
use crate::metrics::{evaluate_method, EvalCase, EvalSettings, ExtractorSuite, MetricReport};
use crate::rng::derive_seed;
use crate::synthkit::{read_fvt, swap_video, IdentitySpec, Swapper};

/// Method names in report order.
pub const METHODS: [&str; 2] = ["keyswap", "per_frame"];

/// Runs the keyframe pipeline and a per-frame noisy swapper on every easy
/// and hard case of the benchmark at `cfg.bench`, then ranks them.
pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<MetricReport> {
    let root = cfg
        .bench
        .as_ref()
        .ok_or_else(|| Error::Config("`bench` must point at a built benchmark".into()))?;
    let entries = read_bench(root).map_err(|e| e.in_stage("load-bench"))?;
    ensure!(!entries.is_empty(), Config, "benchmark at {} is empty", root.display());
    let model = load_model(cfg).map_err(|e| e.in_stage("load-model"))?;
    let mode = cfg.modes[0];
    let mut sources = Vec::new();
    let mut ours = Vec::new();
    let mut baseline = Vec::new();
    let mut targets = Vec::new();
    for e in &entries {
        let source = read_fvt(&root.join(&e.source_path))?;
        for (kind, path, seed) in [
            ("easy", &e.easy_target_path, e.easy_seed),
            ("hard", &e.hard_target_path, e.hard_seed),
        ] {
            let mut case_cfg = cfg.clone();
            case_cfg.target = Some(root.join(path));
            let target = super::swap::load_target(&case_cfg)?;
            let editor = OracleEditor {
                target: IdentitySpec::from_seed(seed),
            };
            let dir = out.join("cases").join(format!("{:04}_{kind}", e.case_id));
            let run = run_swap(&case_cfg, &source, &target, &editor, &model, mode, &dir)?;
            let noisy = Swapper::Noisy {
                failure_prob: cfg.failure_prob,
                artifact_strength: cfg.artifact_strength,
                seed: derive_seed(cfg.seed, e.case_id),
            };
            let (per_frame, _) = swap_video(&source, &IdentitySpec::from_seed(seed), noisy)?;
            ours.push(run.video);
            baseline.push(per_frame.without_meta());
            sources.push(source.clone().without_meta());
            targets.push(read_fvt(&root.join(path))?.frame(0).without_meta());
        }
    }
    let suite = ExtractorSuite::default();
    let frames = cfg.eval_frames.min(sources[0].len());
    let settings = EvalSettings {
        frames_per_video: frames,
        seed: cfg.seed,
    };
    let mut rows = Vec::new();
    for (name, results) in METHODS.iter().zip([&ours, &baseline]) {
        let cases: Vec<EvalCase<'_>> = results
            .iter()
            .zip(&sources)
            .zip(&targets)
            .map(|((r, s), t)| EvalCase {
                result: r,
                source: s,
                target: t,
            })
            .collect();
        rows.push((name.to_string(), evaluate_method(&cases, &suite, &settings)?));
    }
    let report = MetricReport::new(rows, sources.len(), frames)?;
    let p = out.join("report.json");
    fs::write(&p, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&p, e))?;
    let p = out.join("report.txt");
    fs::write(&p, report.rank_table()).map_err(|e| Error::io(&p, e))?;
    Ok(report)
}
