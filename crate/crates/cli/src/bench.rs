//! Frame pipeline benchmark.
//!
//! The default workload is the bundled bench project: a 300-frame 640x576
//! synthetic clip with three trackers, five parameters, six objects and two
//! effects. The clip is synthesized into a scratch directory and read back
//! through the file-backed container, so every timed step includes decoding.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use log::info;

use volfx_core::synth::SynthScene;
use volfx_core::Playback;

const SCENE: &str = include_str!("../../../projects/bench/scene.json");
const PROJECT: &str = include_str!("../../../projects/bench/project.json");

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Synthetic scene to time. Defaults to the bundled bench scene.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Project to run over the scene. Its `sequence` is replaced by the
    /// synthesized clip.
    #[arg(long)]
    project: Option<PathBuf>,
    /// Override the scene's frame count.
    #[arg(long)]
    frames: Option<u32>,
    /// Exit 1 when the p95 step time exceeds this many milliseconds.
    #[arg(long)]
    max_p95_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub steps: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(mut ms: Vec<f64>) -> Timing {
    ms.sort_by(f64::total_cmp);
    Timing {
        steps: ms.len(),
        mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        p50_ms: percentile(&ms, 0.50),
        p95_ms: percentile(&ms, 0.95),
        max_ms: ms[ms.len() - 1],
    }
}

pub fn run(args: &BenchArgs) -> Result<ExitCode> {
    let scene_src = match &args.spec {
        Some(p) => fs::read_to_string(p).with_context(|| format!("{}", p.display()))?,
        None => SCENE.to_string(),
    };
    let project_src = match &args.project {
        Some(p) => fs::read_to_string(p).with_context(|| format!("{}", p.display()))?,
        None => PROJECT.to_string(),
    };
    let mut spec: serde_json::Value = serde_json::from_str(&scene_src).context("bench scene")?;
    if let Some(n) = args.frames {
        spec["frames"] = n.into();
    }
    let scene = SynthScene::new(serde_json::from_value(spec).context("bench scene")?)?;
    let mut project: serde_json::Value = serde_json::from_str(&project_src).context("bench project")?;
    project["sequence"] = "bench.rvv".into();

    let dir = tempfile::tempdir()?;
    let k = scene.intrinsics();
    info!("synthesizing {} frames at {}x{}", scene.frame_count(), k.width, k.height);
    scene.write_container(&dir.path().join("bench.rvv"))?;
    let project_path = dir.path().join("project.json");
    fs::write(&project_path, serde_json::to_string_pretty(&project)?)?;

    let mut pb = Playback::open(&project_path)?;
    let p = pb.project();
    let workload = serde_json::json!({
        "frames": pb.len(), "width": k.width, "height": k.height,
        "trackers": p.trackers.len(), "params": p.params.len(),
        "objects": p.scene.objects.len(), "effects": p.effects.len(),
    });
    let mut ms = Vec::with_capacity(pb.len() as usize);
    while pb.cursor() + 1 < pb.len() {
        let t = Instant::now();
        pb.step()?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    anyhow::ensure!(!ms.is_empty(), "the clip needs at least two frames to time a step");
    let t = summarize(ms);
    eprintln!(
        "{} steps: mean {:.2} ms, p50 {:.2} ms, p95 {:.2} ms, max {:.2} ms",
        t.steps, t.mean_ms, t.p50_ms, t.p95_ms, t.max_ms
    );
    println!(
        "{}",
        serde_json::json!({"workload": workload, "steps": t.steps, "mean_ms": t.mean_ms, "p50_ms": t.p50_ms,
                           "p95_ms": t.p95_ms, "max_ms": t.max_ms})
    );
    match args.max_p95_ms {
        Some(limit) if t.p95_ms > limit => {
            eprintln!("p95 {:.2} ms exceeds the {limit} ms budget", t.p95_ms);
            Ok(ExitCode::FAILURE)
        }
        _ => Ok(ExitCode::SUCCESS),
    }
}
