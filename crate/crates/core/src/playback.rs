//! The frame pipeline and its timeline.
//!
//! Each step decodes a frame, resolves every tracker, commits the variable
//! registry, advances the effects and evaluates the scene. History-bearing
//! state is checkpointed every [`CHECKPOINT_INTERVAL`] frames, so a seek
//! replays at most that many frames and lands on exactly the state a fresh
//! run would reach.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::camera::{CameraIntrinsics, Pixel};
use crate::container::{load_sequence, ContainerError, FrameSource};
use crate::effects::{Effect, EffectGeometry, TrackerFrame};
use crate::frame::{unproject, CloudPoint, PointCloud, RgbdFrame};
use crate::kinematics::{Kinematics, VariableRegistry};
use crate::ply::{read_ply_file, PlyError};
use crate::project::{Project, ProjectError, TrackerDef};
use crate::scene::Anchor;
use crate::snapshot::SceneSnapshot;
use crate::tracking::{
    attach_pose_sidecar, PoseError, PoseTrack, TrackedPoint, TrackerClass, TrackerSet, TrackingError,
};

pub const CHECKPOINT_INTERVAL: u32 = 30;

#[derive(Debug, Error)]
pub enum PlaybackError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("pose sidecar: {0}")]
    Pose(#[from] PoseError),
    #[error("background: {0}")]
    Background(#[from] PlyError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error("frame {frame} out of range (clip has {len} frames)")]
    OutOfRange { frame: u32, len: u32 },
    #[error("sequence has no frames")]
    EmptySequence,
}

/// Inputs shared by every frame: the clip and its sidecars.
#[derive(Clone)]
pub struct Resources {
    pub source: Arc<dyn FrameSource>,
    pub pose: Option<Arc<PoseTrack>>,
    pub background: Option<Arc<PointCloud>>,
}

impl Resources {
    /// Load the files a project refers to, relative to `base`.
    pub fn load(project: &Project, base: &Path) -> Result<Self, PlaybackError> {
        let source = load_sequence(Project::resolve(base, &project.sequence))?;
        let pose = match &project.pose {
            Some(p) => Some(Arc::new(attach_pose_sidecar(source.len(), &Project::resolve(base, p))?)),
            None => None,
        };
        let background = match &project.background {
            Some(p) => Some(Arc::new(read_ply_file(&Project::resolve(base, p))?)),
            None => None,
        };
        Ok(Self { source, pose, background })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        self.source.intrinsics()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PlayState {
    Playing,
    Paused,
}

/// Everything produced for one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: Arc<RgbdFrame>,
    pub points: Vec<TrackedPoint>,
    pub anchors: BTreeMap<String, Anchor>,
    pub registry: Arc<VariableRegistry>,
    pub effects: Vec<EffectGeometry>,
    pub snapshot: Arc<SceneSnapshot>,
    /// Full-resolution reconstruction; absent for frames skipped over during
    /// a replay.
    pub cloud: Option<Arc<PointCloud>>,
}

/// History-bearing state.
#[derive(Debug, Clone)]
struct Engine {
    trackers: TrackerSet,
    kin: Kinematics,
    effects: Vec<Effect>,
    /// Next frame to process.
    next: u32,
}

impl Engine {
    fn build(project: &Project, pose_k: Option<usize>) -> Result<Self, ProjectError> {
        let (trackers, kin) = project.validate(pose_k)?;
        let effects = project.effects.iter().cloned().map(Effect::new).collect();
        Ok(Self { trackers, kin, effects, next: 0 })
    }

    fn process(
        &mut self,
        project: &Project,
        res: &Resources,
        f: u32,
        with_cloud: bool,
    ) -> Result<FrameOutput, PlaybackError> {
        debug_assert_eq!(f, self.next);
        let frame = res.source.frame(f as usize)?;
        let k = res.intrinsics();
        let pose = res.pose.as_deref();
        let resolutions: Vec<_> = self.trackers.iter().map(|t| t.resolve(&frame, k, pose)).collect();
        let mut points = Vec::with_capacity(resolutions.len());
        let mut anchors = BTreeMap::new();
        for (t, r) in self.trackers.iter_mut().zip(&resolutions) {
            let p = t.commit(f, r);
            anchors.insert(p.tracker.clone(), Anchor { world: r.world.or(t.last_world()), valid: p.valid });
            points.push(p);
        }
        let registry = self.kin.commit_frame(f, &points);

        for e in &mut self.effects {
            let tf = e.spec.kind.tracker().and_then(|name| {
                let i = self.trackers.iter().position(|t| t.id.name == name)?;
                let t = self.trackers.iter().nth(i)?;
                Some(TrackerFrame {
                    class: t.kind.class(),
                    world: resolutions[i].world,
                    component: &resolutions[i].component,
                })
            });
            e.update(&frame, k, &registry, tf);
        }
        let effects: Vec<EffectGeometry> = self.effects.iter().map(|e| e.geometry(f)).collect();
        let snapshot = Arc::new(assemble(project, f, &registry, &anchors, effects.clone()));
        let cloud =
            if with_cloud { Some(Arc::new(unproject(&frame, k).expect("frame matches intrinsics"))) } else { None };
        self.next = f + 1;
        Ok(FrameOutput { frame, points, anchors, registry, effects, snapshot, cloud })
    }
}

fn assemble(
    project: &Project,
    f: u32,
    registry: &VariableRegistry,
    anchors: &BTreeMap<String, Anchor>,
    effects: Vec<EffectGeometry>,
) -> SceneSnapshot {
    let camera = project.camera.position(f);
    SceneSnapshot {
        frame: f,
        camera,
        variables: registry.values.clone(),
        objects: project.scene.evaluate(registry, anchors, camera),
        effects,
    }
}

/// How far an edit reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditScope {
    /// Trackers, parameters or effects changed: history is rebuilt.
    History,
    /// Only scene presentation changed: the current frame is re-evaluated.
    Scene,
}

/// Selection mode for click-created trackers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SelectMode {
    Color,
    Body { index: usize },
    Stationary,
}

pub struct Playback {
    project: Project,
    res: Resources,
    engine: Engine,
    checkpoints: BTreeMap<u32, Engine>,
    current: Arc<FrameOutput>,
    state: PlayState,
}

impl Playback {
    /// Validate the project against its resources and evaluate frame 0.
    pub fn new(project: Project, res: Resources) -> Result<Self, PlaybackError> {
        if res.source.is_empty() {
            return Err(PlaybackError::EmptySequence);
        }
        let mut engine = Engine::build(&project, res.pose.as_ref().map(|p| p.k()))?;
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert(0, engine.clone());
        let current = Arc::new(engine.process(&project, &res, 0, true)?);
        Ok(Self { project, res, engine, checkpoints, current, state: PlayState::Paused })
    }

    pub fn open(path: &Path) -> Result<Self, PlaybackError> {
        let project = Project::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let res = Resources::load(&project, base)?;
        Self::new(project, res)
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn resources(&self) -> &Resources {
        &self.res
    }

    pub fn len(&self) -> u32 {
        self.res.source.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cursor(&self) -> u32 {
        self.current.snapshot.frame
    }

    pub fn state(&self) -> PlayState {
        self.state
    }

    pub fn play(&mut self) {
        self.state = if self.cursor() + 1 >= self.len() { PlayState::Paused } else { PlayState::Playing };
    }

    pub fn pause(&mut self) {
        self.state = PlayState::Paused;
    }

    pub fn current(&self) -> &Arc<FrameOutput> {
        &self.current
    }

    pub fn snapshot(&self) -> &Arc<SceneSnapshot> {
        &self.current.snapshot
    }

    pub fn trackers(&self) -> &TrackerSet {
        &self.engine.trackers
    }

    fn run_to(&mut self, n: u32) -> Result<(), PlaybackError> {
        while self.engine.next <= n {
            let f = self.engine.next;
            if f % CHECKPOINT_INTERVAL == 0 {
                self.checkpoints.entry(f).or_insert_with(|| self.engine.clone());
            }
            let out = self.engine.process(&self.project, &self.res, f, f == n)?;
            if f == n {
                self.current = Arc::new(out);
            }
        }
        Ok(())
    }

    /// Advance one frame. At the last frame the timeline pauses and the
    /// current output is returned again.
    pub fn step(&mut self) -> Result<Arc<FrameOutput>, PlaybackError> {
        let next = self.cursor() + 1;
        if next >= self.len() {
            self.state = PlayState::Paused;
            return Ok(Arc::clone(&self.current));
        }
        self.run_to(next)?;
        if next + 1 >= self.len() {
            self.state = PlayState::Paused;
        }
        Ok(Arc::clone(&self.current))
    }

    /// Jump to frame `n`, replaying from the nearest checkpoint at or before
    /// it (or continuing forward when that is closer).
    pub fn seek(&mut self, n: u32) -> Result<Arc<FrameOutput>, PlaybackError> {
        if n >= self.len() {
            return Err(PlaybackError::OutOfRange { frame: n, len: self.len() });
        }
        if n == self.cursor() && self.current.cloud.is_some() {
            return Ok(Arc::clone(&self.current));
        }
        let (&c, cp) = self.checkpoints.range(..=n).next_back().expect("frame 0 is always checkpointed");
        if !(self.engine.next <= n && self.engine.next >= c) {
            self.engine = cp.clone();
        }
        self.run_to(n)?;
        Ok(Arc::clone(&self.current))
    }

    /// Point cloud of the current frame plus the static background, keeping
    /// every `stride`-th point.
    pub fn cloud(&self, stride: usize) -> Vec<CloudPoint> {
        let stride = stride.max(1);
        let frame_pts = self.current.cloud.as_ref().map(|c| c.points.as_slice()).unwrap_or(&[]);
        let bg = self.res.background.as_ref().map(|c| c.points.as_slice()).unwrap_or(&[]);
        frame_pts.iter().chain(bg).step_by(stride).copied().collect()
    }

    /// Apply an edit to the project. The edited project is validated before
    /// it replaces the current one; on error nothing changes.
    pub fn edit<T, E>(
        &mut self,
        scope: EditScope,
        f: impl FnOnce(&mut Project) -> Result<T, E>,
    ) -> Result<T, PlaybackError>
    where
        PlaybackError: From<E>,
    {
        let mut next = self.project.clone();
        let out = f(&mut next)?;
        let engine = Engine::build(&next, self.res.pose.as_ref().map(|p| p.k()))?;
        let cursor = self.cursor();
        self.project = next;
        match scope {
            EditScope::History => {
                self.engine = engine;
                self.checkpoints.clear();
                self.checkpoints.insert(0, self.engine.clone());
                self.run_to(cursor)?;
            }
            EditScope::Scene => {
                let cur = &self.current;
                let snapshot = assemble(&self.project, cursor, &cur.registry, &cur.anchors, cur.effects.clone());
                let mut out = (**cur).clone();
                out.snapshot = Arc::new(snapshot);
                self.current = Arc::new(out);
            }
        }
        Ok(out)
    }

    /// Create a tracker from a click on the current frame.
    pub fn select(&mut self, mode: SelectMode, click: Pixel, name: Option<String>) -> Result<String, PlaybackError> {
        let mut scratch = self.engine.trackers.clone();
        let frame = Arc::clone(&self.current.frame);
        let k = *self.res.intrinsics();
        let id = match mode {
            SelectMode::Color => scratch.create_color(&frame, &k, click, name)?.0,
            SelectMode::Body { index } => scratch.create_body(self.res.pose.as_deref(), index, name)?,
            SelectMode::Stationary => scratch.create_stationary(&frame, &k, click, name)?.0,
        };
        let tracker = scratch.get(&id.name).expect("just inserted");
        let def = TrackerDef::from_kind(&id.name, &tracker.kind);
        self.edit(EditScope::History, |p| {
            p.trackers.push(def);
            Ok::<_, PlaybackError>(())
        })?;
        Ok(id.name)
    }

    /// Per-frame validity of one tracker over `range`, computed from scratch
    /// without disturbing the session.
    pub fn validity(&self, tracker: &str, range: Range<u32>) -> Result<Vec<bool>, PlaybackError> {
        if range.is_empty() {
            return Err(TrackingError::EmptyRange.into());
        }
        if range.end > self.len() {
            return Err(PlaybackError::OutOfRange { frame: range.end - 1, len: self.len() });
        }
        let def = self.project.tracker(tracker).ok_or_else(|| TrackingError::Unknown(tracker.into()))?;
        let mut set = TrackerSet::new();
        set.insert(Some(def.name().to_string()), def.to_kind())?;
        let t = set.get(tracker).expect("inserted");
        let k = self.res.intrinsics();
        let pose = self.res.pose.as_deref();
        let mut out = Vec::with_capacity(range.len());
        for f in range {
            let frame = self.res.source.frame(f as usize)?;
            out.push(t.resolve(&frame, k, pose).world.is_some());
        }
        Ok(out)
    }

    pub fn tracker_class(&self, name: &str) -> Option<TrackerClass> {
        self.project.tracker(name).map(TrackerDef::class)
    }
}

impl From<std::convert::Infallible> for PlaybackError {
    fn from(e: std::convert::Infallible) -> Self {
        match e {}
    }
}

impl From<crate::scene::SceneError> for PlaybackError {
    fn from(e: crate::scene::SceneError) -> Self {
        PlaybackError::Project(e.into())
    }
}

impl From<crate::kinematics::KinematicsError> for PlaybackError {
    fn from(e: crate::kinematics::KinematicsError) -> Self {
        PlaybackError::Project(e.into())
    }
}

impl From<crate::effects::EffectError> for PlaybackError {
    fn from(e: crate::effects::EffectError) -> Self {
        PlaybackError::Project(e.into())
    }
}
