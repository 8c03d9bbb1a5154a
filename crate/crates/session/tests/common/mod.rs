#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use volfx_core::synth::{GroundTruth, SynthScene};
use volfx_session::client::{Incoming, SessionClient};
use volfx_session::protocol::ServerMessage;

pub const FRAMES: u32 = 48;

/// A 160x144 clip: a red disk sweeping right, a blue square sweeping left
/// and hidden on frames 20..=24.
pub fn scene() -> SynthScene {
    let spec = serde_json::json!({
        "frames": FRAMES,
        "seed": 5,
        "intrinsics": {"fx": 125.0, "fy": 125.0, "cx": 80.0, "cy": 72.0, "width": 160, "height": 144},
        "background": {"depth_mm": 2200, "color": [35, 35, 35], "texture": 3},
        "primitives": [
            {"name": "red", "shape": "disk", "color": [220, 20, 20], "radius_px": 6,
             "path": [{"frame": 0, "pixel": [30.0, 50.0], "depth_mm": 1200},
                      {"frame": FRAMES - 1, "pixel": [130.0, 60.0], "depth_mm": 1400}]},
            {"name": "blue", "shape": "square", "color": [20, 20, 220], "radius_px": 5,
             "path": [{"frame": 0, "pixel": [130.0, 100.0], "depth_mm": 1600},
                      {"frame": FRAMES - 1, "pixel": [30.0, 95.0], "depth_mm": 1500}],
             "occlusions": [{"start": 20, "end": 24}]}
        ]
    });
    SynthScene::new(serde_json::from_value(spec).unwrap()).unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub truth: GroundTruth,
}

impl Fixture {
    /// Clip plus a project with a red tracker, a label and a trail.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let truth = scene().write_container(&dir.path().join("clip.rvv")).unwrap();
        let project = serde_json::json!({
            "projver": 1,
            "sequence": "clip.rvv",
            "camera": {"mode": "orbit", "target": [0.0, 0.0, 1.4], "radius": 1.2, "period_frames": 40},
            "trackers": [{"kind": "color", "name": "obj_1", "reference_rgb": [220, 20, 20]}],
            "objects": [{"id": "label_1", "kind": "text", "template": "x = ${obj_1.x}"}],
            "bindings": [{"object": "label_1", "tracker": "obj_1"}],
            "effects": [{"id": "trail", "effect": "trajectory", "tracker": "obj_1", "ttl_frames": 10}]
        });
        fs::write(dir.path().join("project.json"), serde_json::to_string_pretty(&project).unwrap()).unwrap();
        Self { dir, truth }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn project(&self) -> PathBuf {
        self.path().join("project.json")
    }

    pub fn pixel(&self, primitive: &str, frame: u32) -> [f64; 2] {
        self.truth.tracks[primitive][frame as usize].centroid_px.unwrap()
    }

    /// Load a recorded script, filling in placeholders.
    pub fn script(&self, name: &str) -> Vec<Step> {
        let src = fs::read_to_string(scripts_dir().join(name)).unwrap();
        let red = self.pixel("red", 10);
        let blue = self.pixel("blue", 10);
        let src = src
            .replace("@OUT@", &self.path().join("export").display().to_string())
            .replace("@RED_U@", &red[0].to_string())
            .replace("@RED_V@", &red[1].to_string())
            .replace("@BLUE_U@", &blue[0].to_string())
            .replace("@BLUE_V@", &blue[1].to_string());
        src.lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}")))
            .collect()
    }
}

/// Recorded scripts, located so that other crates' tests can share them.
pub fn scripts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../session/tests/scripts")
}

/// One recorded exchange: the text sent and the expected reply.
#[derive(Debug, serde::Deserialize)]
pub struct Step {
    #[serde(default)]
    pub send: Option<serde_json::Value>,
    /// Sent verbatim instead of `send`, for malformed input.
    #[serde(default)]
    pub raw: Option<String>,
    /// `"Ack"` or an error code.
    pub expect: String,
}

impl Step {
    pub fn text(&self) -> String {
        match (&self.send, &self.raw) {
            (Some(v), None) => v.to_string(),
            (None, Some(r)) => r.clone(),
            _ => panic!("step needs exactly one of send/raw"),
        }
    }

    pub fn seq(&self) -> Option<u64> {
        self.send.as_ref().and_then(|v| v.get("seq")).and_then(|s| s.as_u64())
    }
}

/// Reply kind as written in scripts.
pub fn outcome(m: &ServerMessage) -> Option<String> {
    match m {
        ServerMessage::Ack { .. } => Some("Ack".into()),
        ServerMessage::Error { code, .. } => Some(serde_json::to_value(code).unwrap().as_str().unwrap().to_string()),
        _ => None,
    }
}

pub fn snapshots(msgs: &[Incoming]) -> Vec<String> {
    msgs.iter()
        .filter(|m| m.is_snapshot())
        .map(|m| match m {
            Incoming::Text(t) => t.clone(),
            Incoming::Cloud(_) => unreachable!(),
        })
        .collect()
}

pub fn connect(addr: std::net::SocketAddr) -> SessionClient {
    SessionClient::connect(addr).unwrap()
}
