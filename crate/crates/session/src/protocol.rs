//! Wire schema. Control traffic is JSON text; point clouds travel as
//! little-endian binary frames.
//!
//! ```text
//! FrameCloud  "FCLD" | frame u32 | count u32 | count x (x f32, y f32, z f32, r u8, g u8, b u8)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use volfx_core::camera::CameraIntrinsics;
use volfx_core::effects::EffectKind;
use volfx_core::frame::CloudPoint;
use volfx_core::kinematics::ParamSpec;
use volfx_core::playback::SelectMode;
use volfx_core::scene::{CameraPath, ObjectKind, PropertyBinding};
use volfx_core::tracking::TrackerClass;
use volfx_core::{Rgb8, Vec3};

pub const PROTOVER: u32 = 1;
pub const CLOUD_MAGIC: &[u8; 4] = b"FCLD";
pub const CLOUD_HEADER_LEN: usize = 12;
pub const CLOUD_POINT_LEN: usize = 15;

/// A client command with its sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    #[serde(flatten)]
    pub cmd: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd")]
pub enum Command {
    Hello {
        protover: u32,
    },
    LoadProject {
        path: String,
    },
    Play,
    Pause,
    Seek {
        frame: u32,
    },
    /// Advance `count` frames while paused.
    Step {
        #[serde(default = "one")]
        count: u32,
    },
    SelectAt {
        u: f64,
        v: f64,
        mode: SelectMode,
        #[serde(default)]
        name: Option<String>,
    },
    CreateParam {
        param: ParamSpec,
    },
    AttachObject {
        #[serde(default)]
        id: Option<String>,
        #[serde(flatten)]
        object: ObjectKind,
        #[serde(default)]
        tracker: Option<String>,
        #[serde(default)]
        offset: Option<Vec3>,
        #[serde(default)]
        position: Option<Vec3>,
    },
    SetTemplate {
        object: String,
        src: String,
    },
    SetPropertyBinding {
        #[serde(flatten)]
        binding: PropertyBinding,
    },
    AddEffect {
        #[serde(default)]
        id: Option<String>,
        #[serde(flatten)]
        effect: EffectKind,
        #[serde(default)]
        start_frame: Option<u32>,
    },
    SetCamera {
        camera: CameraPath,
    },
    RemoveEntity {
        id: String,
    },
    Export {
        path: String,
        /// `A..B`, half open. Defaults to the whole clip.
        #[serde(default)]
        range: Option<String>,
        #[serde(default)]
        ply: bool,
    },
    QueryMetrics {
        tracker: String,
        #[serde(default)]
        range: Option<String>,
    },
}

fn one() -> u32 {
    1
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Hello { .. } => "Hello",
            Command::LoadProject { .. } => "LoadProject",
            Command::Play => "Play",
            Command::Pause => "Pause",
            Command::Seek { .. } => "Seek",
            Command::Step { .. } => "Step",
            Command::SelectAt { .. } => "SelectAt",
            Command::CreateParam { .. } => "CreateParam",
            Command::AttachObject { .. } => "AttachObject",
            Command::SetTemplate { .. } => "SetTemplate",
            Command::SetPropertyBinding { .. } => "SetPropertyBinding",
            Command::AddEffect { .. } => "AddEffect",
            Command::SetCamera { .. } => "SetCamera",
            Command::RemoveEntity { .. } => "RemoveEntity",
            Command::Export { .. } => "Export",
            Command::QueryMetrics { .. } => "QueryMetrics",
        }
    }

    /// Commands a read-only viewer may send.
    pub fn viewer_allowed(&self) -> bool {
        matches!(self, Command::Hello { .. } | Command::QueryMetrics { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    /// Malformed JSON or an unknown command shape.
    Parse,
    /// Command not valid in the current protocol state.
    BadState,
    UnsupportedVersion,
    /// Well-formed but rejected by validation.
    Invalid,
    NotFound,
    OutOfRange,
    Io,
    ReadOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Author,
    Viewer,
}

/// JSON server messages. Snapshots and clouds are sent pre-encoded and are
/// not part of this enum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    Ack {
        seq: u64,
        /// Name of the entity the command created, when it created one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
    },
    Error {
        seq: Option<u64>,
        code: ErrorCode,
        detail: String,
    },
    SessionInfo {
        protover: u32,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clip: Option<ClipInfo>,
    },
    TrackerUpdate {
        seq: u64,
        tracker: String,
        class: TrackerClass,
        frame: u32,
        world: Option<Vec3>,
        valid: bool,
    },
    MetricsReport {
        seq: u64,
        tracker: String,
        start: u32,
        end: u32,
        frames: u32,
        valid_frames: u32,
        /// Fraction of frames with a valid point.
        loss_metric: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipInfo {
    pub frames: u32,
    pub fps: u32,
    pub cursor: u32,
    pub intrinsics: CameraIntrinsics,
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }

    pub fn error(seq: Option<u64>, code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error { seq, code, detail: detail.into() }
    }

    /// Sequence number of an Ack or Error.
    pub fn reply_seq(&self) -> Option<Option<u64>> {
        match self {
            ServerMessage::Ack { seq, .. } => Some(Some(*seq)),
            ServerMessage::Error { seq, .. } => Some(*seq),
            _ => None,
        }
    }
}

/// One outbound websocket frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outgoing {
    Text(String),
    Binary(Vec<u8>),
}

impl Outgoing {
    pub fn msg(m: &ServerMessage) -> Self {
        Outgoing::Text(m.to_json())
    }

    pub fn is_cloud(&self) -> bool {
        matches!(self, Outgoing::Binary(_))
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Outgoing::Text(s) => Some(s),
            Outgoing::Binary(_) => None,
        }
    }
}

/// Encode the given points as one FrameCloud message.
pub fn encode_cloud(frame: u32, points: &[CloudPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(CLOUD_HEADER_LEN + points.len() * CLOUD_POINT_LEN);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&frame.to_le_bytes());
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for c in p.position {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&[p.color.r, p.color.g, p.color.b]);
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CloudError {
    #[error("frame cloud shorter than its {0}-byte header")]
    Short(usize),
    #[error("bad frame cloud magic")]
    Magic,
    #[error("frame cloud declares {count} points but carries {bytes} payload bytes")]
    Length { count: u32, bytes: usize },
}

pub fn decode_cloud(buf: &[u8]) -> Result<(u32, Vec<CloudPoint>), CloudError> {
    if buf.len() < CLOUD_HEADER_LEN {
        return Err(CloudError::Short(CLOUD_HEADER_LEN));
    }
    if &buf[..4] != CLOUD_MAGIC {
        return Err(CloudError::Magic);
    }
    let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
    let (frame, count) = (word(4), word(8));
    let body = &buf[CLOUD_HEADER_LEN..];
    if body.len() != count as usize * CLOUD_POINT_LEN {
        return Err(CloudError::Length { count, bytes: body.len() });
    }
    let points = body
        .chunks_exact(CLOUD_POINT_LEN)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i..i + 4].try_into().unwrap());
            CloudPoint { position: [f(0), f(4), f(8)], color: Rgb8::new(c[12], c[13], c[14]) }
        })
        .collect();
    Ok((frame, points))
}

/// Parse an `A..B` frame range.
pub fn parse_range(s: &str) -> Result<std::ops::Range<u32>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("range '{s}' is not of the form A..B"))?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad range start in '{s}'"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad range end in '{s}'"))?;
    if a >= b {
        return Err(format!("range '{s}' is empty"));
    }
    Ok(a..b)
}
