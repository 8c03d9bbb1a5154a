//! Transport-free session logic. The server feeds it decoded commands and
//! fans out what it returns; tests drive it directly.

use std::path::{Path, PathBuf};

use log::{debug, info};

use volfx_core::effects::EffectSpec;
use volfx_core::expr::Template;
use volfx_core::frame::FPS;
use volfx_core::playback::{EditScope, PlayState};
use volfx_core::project::ProjectError;
use volfx_core::scene::{Binding, ObjectKind, SceneError, VirtualObject};
use volfx_core::tracking::{loss_metric, TrackingError};
use volfx_core::{Pixel, Playback, PlaybackError};

use crate::export::{export, ExportError};
use crate::protocol::{
    encode_cloud, parse_range, ClipInfo, Command, Envelope, ErrorCode, Outgoing, Role, ServerMessage, PROTOVER,
};

/// Point stride for live streaming. Exports are always full resolution.
pub const LIVE_STRIDE: usize = 4;

/// What one command produced: direct replies for the sender, and frame
/// messages (cloud then snapshot) for every subscriber.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Response {
    pub replies: Vec<Outgoing>,
    pub broadcast: Vec<Outgoing>,
}

impl Response {
    fn reply(m: ServerMessage) -> Self {
        Self { replies: vec![Outgoing::msg(&m)], broadcast: Vec::new() }
    }
}

struct Failure {
    code: ErrorCode,
    detail: String,
}

impl Failure {
    fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self { code, detail: detail.into() }
    }
}

impl From<PlaybackError> for Failure {
    fn from(e: PlaybackError) -> Self {
        let code = match &e {
            PlaybackError::OutOfRange { .. } => ErrorCode::OutOfRange,
            PlaybackError::Project(ProjectError::Io { .. })
            | PlaybackError::Container(_)
            | PlaybackError::Pose(_)
            | PlaybackError::Background(_) => ErrorCode::Io,
            PlaybackError::Tracking(TrackingError::Unknown(_)) => ErrorCode::NotFound,
            _ => ErrorCode::Invalid,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Playback(p) => p.into(),
            ExportError::Io { .. } => Failure::new(ErrorCode::Io, e.to_string()),
            ExportError::Range { .. } => Failure::new(ErrorCode::OutOfRange, e.to_string()),
        }
    }
}

pub struct SessionHost {
    pb: Option<Playback>,
    stride: usize,
    root: PathBuf,
}

impl SessionHost {
    /// An empty session; relative paths in commands resolve against `root`.
    pub fn new(root: impl Into<PathBuf>, stride: usize) -> Self {
        Self { pb: None, stride: stride.max(1), root: root.into() }
    }

    pub fn with_playback(pb: Playback, root: impl Into<PathBuf>, stride: usize) -> Self {
        Self { pb: Some(pb), ..Self::new(root, stride) }
    }

    pub fn playback(&self) -> Option<&Playback> {
        self.pb.as_ref()
    }

    pub fn is_playing(&self) -> bool {
        self.pb.as_ref().is_some_and(|p| p.state() == PlayState::Playing)
    }

    pub fn session_info(&self, role: Role) -> ServerMessage {
        let clip = self.pb.as_ref().map(|pb| ClipInfo {
            frames: pb.len(),
            fps: FPS,
            cursor: pb.cursor(),
            intrinsics: *pb.resources().intrinsics(),
        });
        ServerMessage::SessionInfo { protover: PROTOVER, role, clip }
    }

    /// Cloud and snapshot of the current frame, cloud first.
    pub fn frame_messages(&self) -> Vec<Outgoing> {
        let Some(pb) = &self.pb else { return Vec::new() };
        let snap = pb.snapshot();
        vec![Outgoing::Binary(encode_cloud(snap.frame, &pb.cloud(self.stride))), Outgoing::Text(snap.to_json())]
    }

    /// Advance one frame if playing.
    pub fn tick(&mut self) -> Vec<Outgoing> {
        if !self.is_playing() {
            return Vec::new();
        }
        let pb = self.pb.as_mut().expect("playing implies loaded");
        match pb.step() {
            Ok(_) => self.frame_messages(),
            Err(e) => {
                log::error!("playback stopped: {e}");
                pb.pause();
                Vec::new()
            }
        }
    }

    /// Decode and apply one text message.
    pub fn handle_text(&mut self, text: &str, role: Role) -> Response {
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return Response::reply(ServerMessage::error(None, ErrorCode::Parse, e.to_string())),
        };
        let seq = value.get("seq").and_then(serde_json::Value::as_u64);
        match serde_json::from_value::<Envelope>(value) {
            Ok(env) => self.handle(env, role),
            Err(e) => Response::reply(ServerMessage::error(seq, ErrorCode::Parse, e.to_string())),
        }
    }

    pub fn handle(&mut self, env: Envelope, role: Role) -> Response {
        let Envelope { seq, cmd } = env;
        debug!("seq {seq}: {}", cmd.name());
        if role == Role::Viewer && !cmd.viewer_allowed() {
            return Response::reply(ServerMessage::error(
                Some(seq),
                ErrorCode::ReadOnly,
                format!("{} is not available to viewers", cmd.name()),
            ));
        }
        match self.apply(seq, cmd, role) {
            Ok(r) => r,
            Err(f) => Response::reply(ServerMessage::error(Some(seq), f.code, f.detail)),
        }
    }

    fn loaded(&mut self) -> Result<&mut Playback, Failure> {
        self.pb.as_mut().ok_or_else(|| Failure::new(ErrorCode::BadState, "no project loaded"))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn ack(&self, seq: u64, id: Option<String>, frame: bool) -> Response {
        Response {
            replies: vec![Outgoing::msg(&ServerMessage::Ack { seq, id })],
            broadcast: if frame { self.frame_messages() } else { Vec::new() },
        }
    }

    fn apply(&mut self, seq: u64, cmd: Command, role: Role) -> Result<Response, Failure> {
        match cmd {
            Command::Hello { protover } => {
                if protover != PROTOVER {
                    return Err(Failure::new(
                        ErrorCode::UnsupportedVersion,
                        format!("protocol version {protover} not supported (server speaks {PROTOVER})"),
                    ));
                }
                let mut r = self.ack(seq, None, false);
                r.replies.push(Outgoing::msg(&self.session_info(role)));
                Ok(r)
            }
            Command::LoadProject { path } => {
                let path = self.resolve(&path);
                let pb = Playback::open(&path)?;
                info!("loaded {} ({} frames)", path.display(), pb.len());
                self.pb = Some(pb);
                let mut r = self.ack(seq, None, true);
                r.replies.push(Outgoing::msg(&self.session_info(role)));
                Ok(r)
            }
            Command::Play => {
                self.loaded()?.play();
                Ok(self.ack(seq, None, false))
            }
            Command::Pause => {
                self.loaded()?.pause();
                Ok(self.ack(seq, None, false))
            }
            Command::Seek { frame } => {
                self.loaded()?.seek(frame)?;
                Ok(self.ack(seq, None, true))
            }
            Command::Step { count } => {
                let pb = self.loaded()?;
                if count == 0 {
                    return Err(Failure::new(ErrorCode::Invalid, "step count must be > 0"));
                }
                let target = pb.cursor().saturating_add(count);
                if target >= pb.len() {
                    return Err(PlaybackError::OutOfRange { frame: target, len: pb.len() }.into());
                }
                pb.seek(target)?;
                Ok(self.ack(seq, None, true))
            }
            Command::SelectAt { u, v, mode, name } => {
                let pb = self.loaded()?;
                let name = pb.select(mode, Pixel::new(u, v), name)?;
                let cur = pb.current();
                let point = cur.points.iter().find(|p| p.tracker == name).expect("selected tracker is evaluated");
                let update = ServerMessage::TrackerUpdate {
                    seq,
                    tracker: name.clone(),
                    class: pb.tracker_class(&name).expect("selected tracker exists"),
                    frame: cur.snapshot.frame,
                    world: point.valid.then_some(point.world),
                    valid: point.valid,
                };
                let mut r = self.ack(seq, Some(name), true);
                r.replies.push(Outgoing::msg(&update));
                Ok(r)
            }
            Command::CreateParam { param } => {
                let name = self.loaded()?.edit(EditScope::History, |p| {
                    let trackers = p.build_trackers()?;
                    let mut kin = p.build_kinematics(&trackers)?;
                    let name = kin.add(param.clone(), &trackers)?;
                    p.params.push(volfx_core::kinematics::ParamSpec { name: Some(name.clone()), ..param });
                    Ok::<_, PlaybackError>(name)
                })?;
                Ok(self.ack(seq, Some(name), true))
            }
            Command::AttachObject { id, object, tracker, offset, position } => {
                let id = self.loaded()?.edit(EditScope::Scene, |p| {
                    let id = id.unwrap_or_else(|| p.scene.default_id(&object));
                    let names: Vec<String> = p.trackers.iter().map(|t| t.name().to_string()).collect();
                    let exists = |n: &str| names.iter().any(|t| t == n);
                    let obj = VirtualObject { id: id.clone(), kind: object, position: position.unwrap_or_default() };
                    p.scene.add_object(obj, &exists)?;
                    if let Some(tracker) = tracker {
                        p.scene.attach(Binding { object: id.clone(), tracker, offset }, &exists)?;
                    }
                    Ok::<_, PlaybackError>(id)
                })?;
                Ok(self.ack(seq, Some(id), true))
            }
            Command::SetTemplate { object, src } => {
                let template =
                    Template::parse(&src).map_err(|e| Failure::new(ErrorCode::Invalid, format!("template: {e}")))?;
                self.loaded()?.edit(EditScope::Scene, |p| {
                    let obj = p.scene.object_mut(&object).ok_or_else(|| SceneError::UnknownObject(object.clone()))?;
                    match &mut obj.kind {
                        ObjectKind::Text { template: t, .. } => {
                            *t = template;
                            Ok(())
                        }
                        _ => Err(SceneError::Invalid { object: object.clone(), msg: "not a text object".into() }),
                    }
                })?;
                Ok(self.ack(seq, None, true))
            }
            Command::SetPropertyBinding { binding } => {
                self.loaded()?.edit(EditScope::Scene, |p| {
                    let pbs = &mut p.scene.property_bindings;
                    pbs.retain(|b| {
                        !(b.object == binding.object && b.property == binding.property && b.axis == binding.axis)
                    });
                    pbs.push(binding);
                    Ok::<_, PlaybackError>(())
                })?;
                Ok(self.ack(seq, None, true))
            }
            Command::AddEffect { id, effect, start_frame } => {
                let pb = self.loaded()?;
                let start_frame = start_frame.unwrap_or(pb.cursor());
                let id = pb.edit(EditScope::History, |p| {
                    let id = id.unwrap_or_else(|| {
                        let stem = effect_stem(&effect);
                        (1..).map(|n| format!("{stem}_{n}")).find(|c| !p.effects.iter().any(|e| &e.id == c)).unwrap()
                    });
                    p.effects.push(EffectSpec { id: id.clone(), kind: effect, start_frame });
                    Ok::<_, PlaybackError>(id)
                })?;
                Ok(self.ack(seq, Some(id), true))
            }
            Command::SetCamera { camera } => {
                camera.validate().map_err(|e| Failure::new(ErrorCode::Invalid, e))?;
                self.loaded()?.edit(EditScope::Scene, |p| {
                    p.camera = camera;
                    Ok::<_, PlaybackError>(())
                })?;
                Ok(self.ack(seq, None, true))
            }
            Command::RemoveEntity { id } => {
                self.remove(&id)?;
                Ok(self.ack(seq, None, true))
            }
            Command::Export { path, range, ply } => {
                let dir = self.resolve(&path);
                let pb = self.loaded()?;
                let range = match range {
                    Some(r) => parse_range(&r).map_err(|e| Failure::new(ErrorCode::Invalid, e))?,
                    None => 0..pb.len(),
                };
                let summary = export(pb, &dir, range, ply)?;
                info!("exported {} frames to {}", summary.frames, dir.display());
                Ok(self.ack(seq, None, false))
            }
            Command::QueryMetrics { tracker, range } => {
                let pb = self.loaded()?;
                let range = match range {
                    Some(r) => parse_range(&r).map_err(|e| Failure::new(ErrorCode::Invalid, e))?,
                    None => 0..pb.len(),
                };
                let valid = pb.validity(&tracker, range.clone())?;
                let report = ServerMessage::MetricsReport {
                    seq,
                    tracker,
                    start: range.start,
                    end: range.end,
                    frames: valid.len() as u32,
                    valid_frames: valid.iter().filter(|v| **v).count() as u32,
                    loss_metric: loss_metric(&valid).map_err(PlaybackError::from)?,
                };
                let mut r = self.ack(seq, None, false);
                r.replies.push(Outgoing::msg(&report));
                Ok(r)
            }
        }
    }

    /// Remove an object, effect, tracker or named parameter. Removing
    /// something still referenced fails validation and changes nothing.
    fn remove(&mut self, id: &str) -> Result<(), Failure> {
        let pb = self.loaded()?;
        let project = pb.project();
        if project.scene.object(id).is_some() {
            pb.edit(EditScope::Scene, |p| p.scene.remove_object(id).map(drop))?;
        } else if project.effects.iter().any(|e| e.id == id) {
            pb.edit(EditScope::History, |p| {
                p.effects.retain(|e| e.id != id);
                Ok::<_, PlaybackError>(())
            })?;
        } else if project.tracker(id).is_some() {
            pb.edit(EditScope::History, |p| {
                p.trackers.retain(|t| t.name() != id);
                Ok::<_, PlaybackError>(())
            })?;
        } else {
            let trackers = project.build_trackers()?;
            let kin = project.build_kinematics(&trackers)?;
            let i = kin
                .specs()
                .position(|(name, _)| name == id)
                .ok_or_else(|| Failure::new(ErrorCode::NotFound, format!("no entity named '{id}'")))?;
            pb.edit(EditScope::History, |p| {
                p.params.remove(i);
                Ok::<_, PlaybackError>(())
            })?;
        }
        Ok(())
    }
}

fn effect_stem(e: &volfx_core::effects::EffectKind) -> &'static str {
    use volfx_core::effects::EffectKind::*;
    match e {
        Trajectory { .. } => "trajectory",
        Ghost { .. } => "ghost",
        Graph { .. } => "graph",
    }
}

impl From<ProjectError> for Failure {
    fn from(e: ProjectError) -> Self {
        PlaybackError::from(e).into()
    }
}
