use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny settings so every subcommand finishes in seconds
frames = 9
window = 5
keyframe_budget = 3
source_height = 40
source_width = 40
model_width = 16
model_depth = 2
model_heads = 2
model_encoder_depth = 1
model_mlp_ratio = 2
sample_steps = 2
pairs = 2
train_steps = 4
checkpoint_every = 2
bench_cases = 1
bench_pool = 3
eval_frames = 4
";

fn keyswap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyswap")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = keyswap(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_workflow() {
    let d = tempfile::tempdir().unwrap();
    let root = d.path();
    let cfg = root.join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let c = s(&cfg);
    let data = root.join("data");
    let bench = root.join("bench");
    let model = root.join("model");

    let out = ok(&["forge-data", "--config", c, "--set", "height=32", "--out", s(&data)]);
    assert!(out.contains("wrote 2 of 2 pairs"), "{out}");
    assert!(data.join("manifest.jsonl").exists());

    ok(&["bench-build", "--config", c, "--out", s(&bench)]);
    assert!(bench.join("bench.jsonl").exists());

    let data_kv = format!("data={}", s(&data));
    ok(&["train", "--config", c, "--set", &data_kv, "--out", s(&model)]);
    let ck = model.join("checkpoint.ksck");
    assert!(ck.exists() && model.join("loss.csv").exists());

    let ck_kv = format!("checkpoint={}", s(&ck));
    let run = root.join("run");
    let out = ok(&["swap", "--config", c, "--set", &ck_kv, "--out", s(&run)]);
    assert!(out.contains("keyswap"), "{out}");
    for f in ["plan.json", "keyframes.json", "chunks", "output.fvt", "report.json", "config.txt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }

    let bench_kv = format!("bench={}", s(&bench));
    let eval = root.join("eval");
    let out = ok(&["evaluate", "--config", c, "--set", &ck_kv, "--set", &bench_kv, "--out", s(&eval)]);
    assert!(out.contains("per_frame") && eval.join("report.json").exists(), "{out}");
}

#[test]
fn plan_runs_without_a_model() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&[
        "plan",
        "--set",
        "frames=81",
        "--set",
        "keyframes=0,80",
        "--set",
        "window=81",
        "--out",
        s(d.path()),
    ]);
    assert!(out.contains("labor reduction 40.50 overall"), "{out}");
    let plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["chunks"].as_array().unwrap().len(), 1);
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let d = tempfile::tempdir().unwrap();
    let o = keyswap(&["plan", "--set", "window=2", "--out", s(d.path())]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("config"), "{err}");

    let o = keyswap(&["swap", "--out", s(d.path())]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("load-model") && err.contains("checkpoint"), "{err}");

    let o = keyswap(&["train", "--out", s(d.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("load-data"));
}

#[test]
fn same_inputs_same_outputs() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    for dir in [&a, &b] {
        ok(&["forge-data", "--set", "pairs=3", "--set", "frames=6", "--set", "keyframe_budget=2", "--out", s(dir)]);
    }
    assert_eq!(
        fs::read(a.join("manifest.jsonl")).unwrap(),
        fs::read(b.join("manifest.jsonl")).unwrap()
    );
}
