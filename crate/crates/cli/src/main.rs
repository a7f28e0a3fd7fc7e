use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use keyswap::forge::{build_bench, build_dataset};
use keyswap::pipeline::{evaluate, load_model, load_source, load_target, run_swap, train, OracleEditor, RunConfig};
use keyswap::stitch::{labor_reduction, plan_chunks, select_keyframes, uniform_keyframes, KeyframeStrategy};
use keyswap::synthkit::IdentitySpec;
use keyswap::{Error, Result};

#[derive(Parser)]
#[command(name = "keyswap", version, about = "Keyframe-guided video face swapping at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set window=9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for every artifact of the run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Forge role-reversed training pairs and write a manifest.
    ForgeData(Common),
    /// Build easy/hard benchmark cases from a seeded identity pool.
    BenchBuild(Common),
    /// Train a velocity model on a forged dataset.
    Train(Common),
    /// Write the chunk plan for a video without running the model.
    Plan(Common),
    /// Swap the face of the source video towards the target.
    Swap(Common),
    /// Evaluate the pipeline and a per-frame baseline on a benchmark.
    Evaluate(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ForgeData(_) => "forge-data",
            Command::BenchBuild(_) => "bench-build",
            Command::Train(_) => "train",
            Command::Plan(_) => "plan",
            Command::Swap(_) => "swap",
            Command::Evaluate(_) => "evaluate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::ForgeData(c)
            | Command::BenchBuild(c)
            | Command::Train(c)
            | Command::Plan(c)
            | Command::Swap(c)
            | Command::Evaluate(c) => c,
        }
    }
}

fn prepare(c: &Common) -> Result<RunConfig> {
    let cfg = RunConfig::load(c.config.as_deref(), &c.overrides).map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e).in_stage("config"))?;
    let p = c.out.join("config.txt");
    fs::write(&p, cfg.to_text()).map_err(|e| Error::io(&p, e).in_stage("config"))?;
    Ok(cfg)
}

fn plan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (frames, keyframes) = match (&cfg.keyframes, &cfg.source, cfg.keyframe_strategy) {
        (Some(k), None, _) => (cfg.frames, k.clone()),
        (k, _, strategy) if cfg.source.is_some() || strategy == KeyframeStrategy::Greedy => {
            let video = load_source(cfg)?;
            let k = match k {
                Some(k) => k.clone(),
                None => select_keyframes(&video, cfg.keyframe_budget, strategy)?,
            };
            (video.len(), k)
        }
        _ => (cfg.frames, uniform_keyframes(cfg.frames, cfg.keyframe_budget)),
    };
    let plan = plan_chunks(frames, &keyframes, cfg.window, cfg.aux_config())?;
    let p = out.join("plan.json");
    fs::write(&p, serde_json::to_string_pretty(&plan)?).map_err(|e| Error::io(&p, e))?;
    let l = labor_reduction(&plan);
    println!(
        "{} chunks over {} passes; labor reduction {:.2} overall, {:.2} per chunk",
        plan.chunks.len(),
        plan.passes(),
        l.overall,
        l.per_chunk
    );
    Ok(())
}

fn run(cmd: &Command) -> Result<()> {
    let c = cmd.common();
    let cfg = prepare(c)?;
    let out = c.out.as_path();
    match cmd {
        Command::ForgeData(_) => {
            let m = build_dataset(&cfg.forge_config(), out)?;
            println!(
                "wrote {} of {} pairs ({} rejected, {} i/o errors)",
                m.summary.written,
                m.summary.requested,
                m.summary.rejected.len(),
                m.summary.io_errors.len()
            );
        }
        Command::BenchBuild(_) => {
            let rows = build_bench(&cfg.bench_config(), out)?;
            println!("wrote {} benchmark cases", rows.len());
        }
        Command::Train(_) => {
            for r in train(&cfg, out)? {
                let last = r.losses.last().map_or(f64::NAN, |l| l.1);
                println!("{:?}: {} steps, last loss {last:.5} -> {}", r.mode, r.losses.len(), r.checkpoint.display());
            }
        }
        Command::Plan(_) => plan(&cfg, out).map_err(|e| e.in_stage("plan"))?,
        Command::Swap(_) => {
            let model = load_model(&cfg).map_err(|e| e.in_stage("load-model"))?;
            let source = load_source(&cfg).map_err(|e| e.in_stage("load-source"))?;
            let target = load_target(&cfg).map_err(|e| e.in_stage("load-target"))?;
            let editor = OracleEditor {
                target: IdentitySpec::from_seed(cfg.target_seed),
            };
            let o = run_swap(&cfg, &source, &target, &editor, &model, cfg.modes[0], out)?;
            print!("{}", o.report.rank_table());
        }
        Command::Evaluate(_) => {
            let r = evaluate(&cfg, out)?;
            print!("{}", r.rank_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = match e {
                Error::Stage { .. } => e,
                other => other.in_stage(cli.command.name()),
            };
            eprintln!("keyswap {}: {e}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
