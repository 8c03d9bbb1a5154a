use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use volfx_core::synth::SynthScene;
use volfx_core::tracking::loss_metric;
use volfx_core::Playback;
use volfx_session::protocol::parse_range;
use volfx_session::{export, Server, SessionHost, DEFAULT_LISTEN, LIVE_STRIDE};

mod bench;

#[derive(Debug, Parser)]
#[command(name = "volfx", version, about = "Track objects in RGB-D clips and render bound annotations and effects")]
struct Cli {
    /// Log level for diagnostics on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info", env = "VOLFX_LOG")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check a project's schema, references and resources.
    Validate {
        #[arg(long)]
        project: PathBuf,
    },
    /// Export per-frame snapshots (and optionally PLY clouds) headlessly.
    Render {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Half-open frame range, e.g. 0..150. Defaults to the whole clip.
        #[arg(long)]
        range: Option<String>,
        /// Also write NNNNNN.ply with the full cloud and effect geometry.
        #[arg(long)]
        ply: bool,
    },
    /// Report the tracking-loss metric per tracker.
    Metrics {
        #[arg(long)]
        project: PathBuf,
        /// Tracker to report; repeat for several. Defaults to every tracker.
        #[arg(long)]
        tracker: Vec<String>,
        #[arg(long)]
        range: Option<String>,
    },
    /// Generate a synthetic sequence with exact ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write per-frame ground truth (JSON).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Where to write the pose sidecar, for specs with a pose script.
        #[arg(long)]
        pose: Option<PathBuf>,
    },
    /// Serve an authoring session over WebSocket.
    Serve {
        /// Project to load on startup. Clients may load one later instead.
        #[arg(long)]
        project: Option<PathBuf>,
        #[arg(long, env = "VOLFX_LISTEN", default_value = DEFAULT_LISTEN)]
        listen: SocketAddr,
        /// Keep every n-th point of streamed clouds.
        #[arg(long, default_value_t = LIVE_STRIDE)]
        stride: usize,
        /// Directory that LoadProject paths resolve against.
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Time the frame pipeline on a synthetic 640x576 clip.
    Bench(bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Validate { project } => validate(&project),
        Cmd::Render { project, out, range, ply } => render(&project, &out, range.as_deref(), ply),
        Cmd::Metrics { project, tracker, range } => metrics(&project, tracker, range.as_deref()),
        Cmd::Synth { spec, out, truth, pose } => synth(&spec, &out, truth.as_deref(), pose.as_deref()),
        Cmd::Serve { project, listen, stride, root } => serve(project, listen, stride, root),
        Cmd::Bench(args) => bench::run(&args),
    }
}

fn open(project: &Path) -> Result<Playback> {
    Playback::open(project).with_context(|| format!("{}", project.display()))
}

fn validate(project: &Path) -> Result<ExitCode> {
    match Playback::open(project) {
        Ok(pb) => {
            let p = pb.project();
            info!(
                "{}: {} frames, {} trackers, {} params, {} objects, {} effects",
                project.display(),
                pb.len(),
                p.trackers.len(),
                p.params.len(),
                p.scene.objects.len(),
                p.effects.len()
            );
            println!("{}", serde_json::json!({"project": project, "valid": true, "frames": pb.len()}));
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("{}: invalid: {e}", project.display());
            println!("{}", serde_json::json!({"project": project, "valid": false, "error": e.to_string()}));
            Ok(ExitCode::FAILURE)
        }
    }
}

fn clip_range(pb: &Playback, range: Option<&str>) -> Result<std::ops::Range<u32>> {
    match range {
        Some(r) => parse_range(r).map_err(anyhow::Error::msg).context("--range"),
        None => Ok(0..pb.len()),
    }
}

fn render(project: &Path, out: &Path, range: Option<&str>, ply: bool) -> Result<ExitCode> {
    let mut pb = open(project)?;
    let range = clip_range(&pb, range)?;
    let summary = export(&mut pb, out, range.clone(), ply)?;
    info!("wrote {} files for frames {}..{} to {}", summary.files.len(), range.start, range.end, out.display());
    println!(
        "{}",
        serde_json::json!({"out": out, "start": range.start, "end": range.end, "frames": summary.frames,
                           "files": summary.files.len()})
    );
    Ok(ExitCode::SUCCESS)
}

fn metrics(project: &Path, trackers: Vec<String>, range: Option<&str>) -> Result<ExitCode> {
    let pb = open(project)?;
    let range = clip_range(&pb, range)?;
    let names = if trackers.is_empty() {
        pb.project().trackers.iter().map(|t| t.name().to_string()).collect()
    } else {
        trackers
    };
    let mut table =
        format!("{:<16} {:<11} {:>7} {:>7} {:>6} {:>9}\n", "tracker", "class", "frames", "valid", "lost", "metric");
    let mut stdout = std::io::stdout().lock();
    for name in &names {
        let valid = pb.validity(name, range.clone()).with_context(|| format!("tracker '{name}'"))?;
        let n = valid.len();
        let ok = valid.iter().filter(|v| **v).count();
        let m = loss_metric(&valid)?;
        let class = pb.tracker_class(name).map(|c| format!("{c:?}").to_lowercase()).unwrap_or_default();
        table += &format!("{name:<16} {class:<11} {n:>7} {ok:>7} {:>6} {m:>9.4}\n", n - ok);
        let line = serde_json::json!({
            "tracker": name, "class": class, "start": range.start, "end": range.end,
            "frames": n, "valid_frames": ok, "lost_frames": n - ok, "loss_metric": m,
        });
        writeln!(stdout, "{line}")?;
    }
    eprint!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn synth(spec: &Path, out: &Path, truth: Option<&Path>, pose: Option<&Path>) -> Result<ExitCode> {
    let text = fs::read_to_string(spec).with_context(|| format!("{}", spec.display()))?;
    let scene = SynthScene::from_json(&text).with_context(|| format!("{}", spec.display()))?;
    let gt = scene.write_container(out).with_context(|| format!("{}", out.display()))?;
    if let Some(path) = truth {
        let f = fs::File::create(path).with_context(|| format!("{}", path.display()))?;
        SynthScene::write_truth(&gt, std::io::BufWriter::new(f))?;
    }
    match (pose, scene.pose_sidecar()) {
        (Some(path), Some(text)) => fs::write(path, text).with_context(|| format!("{}", path.display()))?,
        (Some(_), None) => bail!("--pose given but the spec has no pose script"),
        _ => {}
    }
    let k = scene.intrinsics();
    info!("wrote {} frames of {}x{} to {}", scene.frame_count(), k.width, k.height, out.display());
    println!(
        "{}",
        serde_json::json!({"out": out, "frames": scene.frame_count(), "width": k.width, "height": k.height})
    );
    Ok(ExitCode::SUCCESS)
}

fn serve(project: Option<PathBuf>, listen: SocketAddr, stride: usize, root: Option<PathBuf>) -> Result<ExitCode> {
    let root = match (root, &project) {
        (Some(r), _) => r,
        (None, Some(p)) => p.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => std::env::current_dir()?,
    };
    let host = match project {
        Some(p) => SessionHost::with_playback(open(&p)?, root, stride),
        None => SessionHost::new(root, stride),
    };
    let server = Server::bind(listen, host).with_context(|| format!("bind {listen}"))?;
    println!("{}", serde_json::json!({"listen": format!("ws://{}", server.local_addr()?)}));
    server.run()?;
    Ok(ExitCode::SUCCESS)
}
