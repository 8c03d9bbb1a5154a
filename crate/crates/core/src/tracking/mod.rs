//! Trackers: named selections that resolve to a 3D point on every frame.
//!
//! Three kinds exist. Color trackers follow a blob of the color sampled at the
//! click, body trackers follow one keypoint column of a pose sidecar, and
//! stationary anchors are frozen world points obtained by raycasting a click.

pub mod color;
pub mod pose;
pub mod stationary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, Pixel};
use crate::frame::RgbdFrame;
use crate::geometry::Vec3;

pub use color::{track_color, ColorObservation, ColorTrackerState};
pub use pose::{attach_pose_sidecar, resolve_body, Keypoint, PoseError, PoseFrame, PoseTrack};

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("click ({u}, {v}) outside the {width}x{height} frame")]
    OutOfBounds { u: f64, v: f64, width: u16, height: u16 },
    #[error("no pose sidecar attached")]
    NoPoseSidecar,
    #[error("keypoint index {index} out of range (sidecar has {k} keypoints)")]
    KeypointOutOfRange { index: usize, k: usize },
    #[error("tracker name '{0}' is not a valid identifier")]
    BadName(String),
    #[error("tracker name '{0}' already in use")]
    DuplicateName(String),
    #[error("unknown tracker '{0}'")]
    Unknown(String),
    #[error("tracker '{0}' is not a stationary anchor")]
    NotStationary(String),
    #[error("empty frame range")]
    EmptyRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerClass {
    Color,
    Body,
    Stationary,
}

impl TrackerClass {
    pub fn prefix(self) -> &'static str {
        match self {
            TrackerClass::Color => "obj",
            TrackerClass::Body => "body",
            TrackerClass::Stationary => "anchor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrackerId {
    pub ordinal: u32,
    pub name: String,
}

/// Identifier rule shared with the expression language.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint {
    pub tracker: String,
    pub frame: u32,
    /// Resolved point when valid, otherwise the last valid point (or the
    /// origin if the tracker has never resolved).
    pub world: Vec3,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrackerKind {
    Color(ColorTrackerState),
    Body { keypoint: usize, confidence_floor: f64, last_world: Option<Vec3> },
    Stationary { position: Vec3 },
}

impl TrackerKind {
    pub fn class(&self) -> TrackerClass {
        match self {
            TrackerKind::Color(_) => TrackerClass::Color,
            TrackerKind::Body { .. } => TrackerClass::Body,
            TrackerKind::Stationary { .. } => TrackerClass::Stationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub id: TrackerId,
    pub kind: TrackerKind,
}

/// Per-frame resolution of a tracker, before it is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub world: Option<Vec3>,
    /// Selected blob pixels (color trackers only), used for ghost clones.
    pub component: Vec<u32>,
}

impl Tracker {
    pub fn last_world(&self) -> Option<Vec3> {
        match &self.kind {
            TrackerKind::Color(s) => s.last_world,
            TrackerKind::Body { last_world, .. } => *last_world,
            TrackerKind::Stationary { position } => Some(*position),
        }
    }

    /// Pure resolution on one frame.
    pub fn resolve(&self, frame: &RgbdFrame, k: &CameraIntrinsics, pose: Option<&PoseTrack>) -> Resolution {
        match &self.kind {
            TrackerKind::Color(state) => {
                let obs = track_color(frame, k, state);
                Resolution { world: obs.world, component: obs.component }
            }
            TrackerKind::Body { keypoint, confidence_floor, .. } => {
                let world = pose
                    .and_then(|p| p.keypoint(frame.index as usize, *keypoint))
                    .and_then(|kp| resolve_body(frame, k, kp, *confidence_floor));
                Resolution { world, component: Vec::new() }
            }
            TrackerKind::Stationary { position } => Resolution { world: Some(*position), component: Vec::new() },
        }
    }

    /// Apply a resolution and return the tracked point for the frame.
    pub fn commit(&mut self, frame: u32, res: &Resolution) -> TrackedPoint {
        match &mut self.kind {
            TrackerKind::Color(state) => state.commit(res.world),
            TrackerKind::Body { last_world, .. } => {
                if res.world.is_some() {
                    *last_world = res.world;
                }
            }
            TrackerKind::Stationary { .. } => {}
        }
        TrackedPoint {
            tracker: self.id.name.clone(),
            frame,
            world: res.world.or(self.last_world()).unwrap_or(Vec3::ZERO),
            valid: res.world.is_some(),
        }
    }

    /// Clear history-bearing state (used when replaying from frame 0).
    pub fn reset(&mut self) {
        match &mut self.kind {
            TrackerKind::Color(s) => {
                s.last_world = None;
                s.lost = false;
            }
            TrackerKind::Body { last_world, .. } => *last_world = None,
            TrackerKind::Stationary { .. } => {}
        }
    }
}

/// The session's trackers in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackerSet {
    trackers: Vec<Tracker>,
    next_ordinal: u32,
}

impl TrackerSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tracker> {
        self.trackers.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tracker> {
        self.trackers.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.trackers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trackers.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tracker> {
        self.trackers.iter().find(|t| t.id.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tracker> {
        self.trackers.iter_mut().find(|t| t.id.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Next free default name for a class: `obj_<n>`, `body_<n>`, `anchor_<n>`.
    pub fn default_name(&self, class: TrackerClass) -> String {
        let mut n = 1 + self.trackers.iter().filter(|t| t.kind.class() == class).count();
        loop {
            let name = format!("{}_{n}", class.prefix());
            if !self.contains(&name) {
                return name;
            }
            n += 1;
        }
    }

    /// Register a tracker under `name` (or the default name for its class).
    pub fn insert(&mut self, name: Option<String>, kind: TrackerKind) -> Result<TrackerId, TrackingError> {
        let name = name.unwrap_or_else(|| self.default_name(kind.class()));
        if !is_identifier(&name) {
            return Err(TrackingError::BadName(name));
        }
        if self.contains(&name) {
            return Err(TrackingError::DuplicateName(name));
        }
        self.next_ordinal += 1;
        let id = TrackerId { ordinal: self.next_ordinal, name };
        self.trackers.push(Tracker { id: id.clone(), kind });
        Ok(id)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tracker> {
        let i = self.trackers.iter().position(|t| t.id.name == name)?;
        Some(self.trackers.remove(i))
    }

    /// Create a color tracker from a click: the reference color is sampled at
    /// the click and the tracker is resolved on the same frame.
    pub fn create_color(
        &mut self,
        frame: &RgbdFrame,
        k: &CameraIntrinsics,
        click: Pixel,
        name: Option<String>,
    ) -> Result<(TrackerId, ColorObservation), TrackingError> {
        let (u, v) = click_cell(frame, click)?;
        let mut state = ColorTrackerState::new(frame.color.get(u, v));
        let obs = track_color(frame, k, &state);
        state.commit(obs.world);
        let id = self.insert(name, TrackerKind::Color(state))?;
        Ok((id, obs))
    }

    pub fn create_body(
        &mut self,
        pose: Option<&PoseTrack>,
        keypoint: usize,
        name: Option<String>,
    ) -> Result<TrackerId, TrackingError> {
        let pose = pose.ok_or(TrackingError::NoPoseSidecar)?;
        if keypoint >= pose.k() {
            return Err(TrackingError::KeypointOutOfRange { index: keypoint, k: pose.k() });
        }
        self.insert(
            name,
            TrackerKind::Body { keypoint, confidence_floor: pose::DEFAULT_CONFIDENCE_FLOOR, last_world: None },
        )
    }

    pub fn create_stationary(
        &mut self,
        frame: &RgbdFrame,
        k: &CameraIntrinsics,
        click: Pixel,
        name: Option<String>,
    ) -> Result<(TrackerId, Vec3), TrackingError> {
        click_cell(frame, click)?;
        let (position, _) = stationary::raycast(frame, k, click);
        let id = self.insert(name, TrackerKind::Stationary { position })?;
        Ok((id, position))
    }

    /// Move a stationary anchor by `delta`; the new position is frozen again.
    pub fn nudge(&mut self, name: &str, delta: Vec3) -> Result<Vec3, TrackingError> {
        let t = self.get_mut(name).ok_or_else(|| TrackingError::Unknown(name.to_string()))?;
        match &mut t.kind {
            TrackerKind::Stationary { position } => {
                *position += delta;
                Ok(*position)
            }
            _ => Err(TrackingError::NotStationary(name.to_string())),
        }
    }

    pub fn reset(&mut self) {
        self.trackers.iter_mut().for_each(Tracker::reset);
    }
}

fn click_cell(frame: &RgbdFrame, click: Pixel) -> Result<(usize, usize), TrackingError> {
    let (u, v) = (click.u.round(), click.v.round());
    let (w, h) = (frame.width(), frame.height());
    if !(click.u.is_finite() && click.v.is_finite()) || u < 0.0 || v < 0.0 || u >= f64::from(w) || v >= f64::from(h) {
        return Err(TrackingError::OutOfBounds { u: click.u, v: click.v, width: w, height: h });
    }
    Ok((u as usize, v as usize))
}

/// Fraction of frames in which the tracker produced a valid point.
pub fn loss_metric(valid: &[bool]) -> Result<f64, TrackingError> {
    if valid.is_empty() {
        return Err(TrackingError::EmptyRange);
    }
    Ok(valid.iter().filter(|&&v| v).count() as f64 / valid.len() as f64)
}
