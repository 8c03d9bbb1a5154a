//! Project files: everything needed to reproduce an augmented clip.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::{EffectError, EffectSpec};
use crate::geometry::{Rgb8, Vec3};
use crate::kinematics::{Kinematics, KinematicsError, ParamSpec};
use crate::scene::{CameraPath, Scene, SceneError};
use crate::tracking::color::{DEFAULT_MIN_COMPONENT_PX, DEFAULT_TOLERANCE};
use crate::tracking::pose::DEFAULT_CONFIDENCE_FLOOR;
use crate::tracking::{ColorTrackerState, TrackerClass, TrackerKind, TrackerSet, TrackingError};

pub const PROJECT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported projver {0} (expected {PROJECT_VERSION})")]
    Version(u32),
    #[error("tracker: {0}")]
    Tracker(#[from] TrackingError),
    #[error("tracker '{name}': {msg}")]
    TrackerDef { name: String, msg: String },
    #[error("parameter: {0}")]
    Param(#[from] KinematicsError),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("effect: {0}")]
    Effect(#[from] EffectError),
    #[error("camera: {0}")]
    Camera(String),
    #[error("tracker '{name}' uses keypoint {index} but the pose sidecar has {k}")]
    Keypoint { name: String, index: usize, k: usize },
    #[error("body tracker '{0}' needs a pose sidecar")]
    NoPose(String),
}

fn tolerance_default() -> u8 {
    DEFAULT_TOLERANCE
}
fn min_px_default() -> u32 {
    DEFAULT_MIN_COMPONENT_PX
}
fn floor_default() -> f64 {
    DEFAULT_CONFIDENCE_FLOOR
}

/// Persistent definition of a tracker; runtime state starts empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrackerDef {
    Color {
        name: String,
        reference_rgb: Rgb8,
        #[serde(default = "tolerance_default")]
        tolerance: u8,
        #[serde(default = "min_px_default")]
        min_component_px: u32,
    },
    Body {
        name: String,
        keypoint: usize,
        #[serde(default = "floor_default")]
        confidence_floor: f64,
    },
    Stationary {
        name: String,
        position: Vec3,
    },
}

impl TrackerDef {
    pub fn name(&self) -> &str {
        match self {
            TrackerDef::Color { name, .. } | TrackerDef::Body { name, .. } | TrackerDef::Stationary { name, .. } => {
                name
            }
        }
    }

    pub fn class(&self) -> TrackerClass {
        match self {
            TrackerDef::Color { .. } => TrackerClass::Color,
            TrackerDef::Body { .. } => TrackerClass::Body,
            TrackerDef::Stationary { .. } => TrackerClass::Stationary,
        }
    }

    pub fn to_kind(&self) -> TrackerKind {
        match self {
            TrackerDef::Color { reference_rgb, tolerance, min_component_px, .. } => {
                let mut s = ColorTrackerState::new(*reference_rgb);
                s.tolerance = *tolerance;
                s.min_component_px = *min_component_px;
                TrackerKind::Color(s)
            }
            TrackerDef::Body { keypoint, confidence_floor, .. } => {
                TrackerKind::Body { keypoint: *keypoint, confidence_floor: *confidence_floor, last_world: None }
            }
            TrackerDef::Stationary { position, .. } => TrackerKind::Stationary { position: *position },
        }
    }

    pub fn from_kind(name: &str, kind: &TrackerKind) -> Self {
        let name = name.to_string();
        match kind {
            TrackerKind::Color(s) => TrackerDef::Color {
                name,
                reference_rgb: s.reference_rgb,
                tolerance: s.tolerance,
                min_component_px: s.min_component_px,
            },
            TrackerKind::Body { keypoint, confidence_floor, .. } => {
                TrackerDef::Body { name, keypoint: *keypoint, confidence_floor: *confidence_floor }
            }
            TrackerKind::Stationary { position } => TrackerDef::Stationary { name, position: *position },
        }
    }

    fn check(&self) -> Result<(), ProjectError> {
        let bad = |msg: &str| Err(ProjectError::TrackerDef { name: self.name().to_string(), msg: msg.into() });
        match self {
            TrackerDef::Color { min_component_px: 0, .. } => bad("min_component_px must be at least 1"),
            TrackerDef::Body { confidence_floor, .. } if !(0.0..=1.0).contains(confidence_floor) => {
                bad("confidence_floor must lie in [0, 1]")
            }
            TrackerDef::Stationary { position, .. } if !position.is_finite() => bad("position must be finite"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub projver: u32,
    /// Sequence container, relative to the project file.
    pub sequence: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PathBuf>,
    /// Static background scan (PLY), rendered but never tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    #[serde(default)]
    pub camera: CameraPath,
    #[serde(default)]
    pub trackers: Vec<TrackerDef>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(flatten)]
    pub scene: Scene,
    #[serde(default)]
    pub effects: Vec<EffectSpec>,
}

impl Project {
    pub fn new(sequence: impl Into<PathBuf>) -> Self {
        Self {
            projver: PROJECT_VERSION,
            sequence: sequence.into(),
            pose: None,
            background: None,
            camera: CameraPath::default(),
            trackers: Vec::new(),
            params: Vec::new(),
            scene: Scene::default(),
            effects: Vec::new(),
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ProjectError> {
        let p: Project =
            serde_json::from_str(text).map_err(|source| ProjectError::Json { path: origin.into(), source })?;
        if p.projver != PROJECT_VERSION {
            return Err(ProjectError::Version(p.projver));
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, ProjectError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProjectError::Io { path: path.into(), source })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("project serializes")
    }

    /// Resolve a project-relative path against the project file's directory.
    pub fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn tracker(&self, name: &str) -> Option<&TrackerDef> {
        self.trackers.iter().find(|t| t.name() == name)
    }

    pub fn build_trackers(&self) -> Result<TrackerSet, ProjectError> {
        let mut set = TrackerSet::new();
        for t in &self.trackers {
            t.check()?;
            set.insert(Some(t.name().to_string()), t.to_kind())?;
        }
        Ok(set)
    }

    pub fn build_kinematics(&self, trackers: &TrackerSet) -> Result<Kinematics, ProjectError> {
        let mut kin = Kinematics::new();
        for spec in &self.params {
            kin.add(spec.clone(), trackers)?;
        }
        Ok(kin)
    }

    /// Reference and consistency checks. `pose_k` is the keypoint count of the
    /// attached sidecar, if any.
    pub fn validate(&self, pose_k: Option<usize>) -> Result<(TrackerSet, Kinematics), ProjectError> {
        let trackers = self.build_trackers()?;
        for t in &self.trackers {
            if let TrackerDef::Body { name, keypoint, .. } = t {
                let k = pose_k.ok_or_else(|| ProjectError::NoPose(name.clone()))?;
                if *keypoint >= k {
                    return Err(ProjectError::Keypoint { name: name.clone(), index: *keypoint, k });
                }
            }
        }
        let kin = self.build_kinematics(&trackers)?;
        let declared = kin.declared_names(&trackers);
        let is_declared = |n: &str| declared.iter().any(|d| d == n);
        let exists = |n: &str| trackers.contains(n);
        self.scene.validate(&exists, &is_declared)?;
        let class = |n: &str| self.tracker(n).map(TrackerDef::class);
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.effects {
            if !ids.insert(e.id.as_str()) {
                return Err(EffectError::DuplicateId(e.id.clone()).into());
            }
            e.validate(&class, &is_declared)?;
        }
        self.camera.validate().map_err(ProjectError::Camera)?;
        Ok((trackers, kin))
    }
}
