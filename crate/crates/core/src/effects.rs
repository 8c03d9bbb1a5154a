//! Motion effects: trajectory markers, ghost clones and graph series.
//!
//! Every effect keeps history, so its state is part of what playback
//! checkpoints and replays.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::frame::{unproject_pixels, CloudPoint, RgbdFrame};
use crate::geometry::{Rgb8, Rgba, Vec3};
use crate::kinematics::VariableRegistry;
use crate::tracking::TrackerClass;

pub const DEFAULT_TTL_FRAMES: u32 = 150;
pub const DEFAULT_MARKER_RADIUS_M: f64 = 0.01;
pub const DEFAULT_GHOST_CADENCE: u32 = 30;
pub const BODY_GHOST_RADIUS_M: f64 = 0.5;
pub const DEFAULT_GRAPH_WINDOW: u32 = 300;
pub const GHOST_OPACITY_NEWEST: f64 = 0.6;
pub const GHOST_OPACITY_OLDEST: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum EffectError {
    #[error("effect id '{0}' already in use")]
    DuplicateId(String),
    #[error("unknown effect '{0}'")]
    Unknown(String),
    #[error("unknown tracker '{0}'")]
    UnknownTracker(String),
    #[error("ghost clones need a color or body tracker; '{0}' is a stationary anchor")]
    StationaryGhost(String),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("effect '{id}': {msg}")]
    Invalid { id: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrailStyle {
    #[default]
    Markers,
    Trail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    #[default]
    Line,
    Bar,
    Pie,
}

fn ttl_default() -> u32 {
    DEFAULT_TTL_FRAMES
}
fn radius_default() -> f64 {
    DEFAULT_MARKER_RADIUS_M
}
fn cadence_default() -> u32 {
    DEFAULT_GHOST_CADENCE
}
fn body_radius_default() -> f64 {
    BODY_GHOST_RADIUS_M
}
fn window_default() -> u32 {
    DEFAULT_GRAPH_WINDOW
}
fn one() -> u32 {
    1
}
fn marker_color() -> Rgba {
    Rgba::new(1.0, 0.3, 0.2, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "lowercase")]
pub enum EffectKind {
    Trajectory {
        tracker: String,
        #[serde(default = "ttl_default")]
        ttl_frames: u32,
        #[serde(default = "radius_default")]
        radius: f64,
        #[serde(default)]
        style: TrailStyle,
        #[serde(default = "marker_color")]
        color: Rgba,
    },
    Ghost {
        tracker: String,
        #[serde(default = "cadence_default")]
        cadence_frames: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_ghosts: Option<usize>,
        /// Clone radius around a body keypoint.
        #[serde(default = "body_radius_default")]
        body_radius: f64,
        /// Keep every n-th clone point.
        #[serde(default = "one")]
        stride: u32,
    },
    Graph {
        variable: String,
        #[serde(default = "window_default")]
        window_frames: u32,
        #[serde(default)]
        chart: ChartKind,
    },
}

impl EffectKind {
    pub fn tracker(&self) -> Option<&str> {
        match self {
            EffectKind::Trajectory { tracker, .. } | EffectKind::Ghost { tracker, .. } => Some(tracker),
            EffectKind::Graph { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: EffectKind,
    /// First frame the effect observes. Ghost cadence counts from here.
    #[serde(default)]
    pub start_frame: u32,
}

impl EffectSpec {
    pub fn validate(
        &self,
        tracker_class: &dyn Fn(&str) -> Option<TrackerClass>,
        declared: &dyn Fn(&str) -> bool,
    ) -> Result<(), EffectError> {
        let bad = |msg: &str| Err(EffectError::Invalid { id: self.id.clone(), msg: msg.into() });
        if let Some(t) = self.kind.tracker() {
            let class = tracker_class(t).ok_or_else(|| EffectError::UnknownTracker(t.into()))?;
            if matches!(self.kind, EffectKind::Ghost { .. }) && class == TrackerClass::Stationary {
                return Err(EffectError::StationaryGhost(t.into()));
            }
        }
        match &self.kind {
            EffectKind::Trajectory { ttl_frames, radius, color, .. } => {
                if *ttl_frames == 0 {
                    return bad("ttl_frames must be at least 1");
                }
                if !(*radius > 0.0 && radius.is_finite()) || !color.is_valid() {
                    return bad("radius must be positive and color components in [0, 1]");
                }
            }
            EffectKind::Ghost { cadence_frames, max_ghosts, body_radius, stride, .. } => {
                if *cadence_frames == 0 || *stride == 0 || *max_ghosts == Some(0) {
                    return bad("cadence, stride and max_ghosts must be at least 1");
                }
                if !(*body_radius > 0.0 && body_radius.is_finite()) {
                    return bad("body_radius must be positive");
                }
            }
            EffectKind::Graph { variable, window_frames, .. } => {
                if !declared(variable) {
                    return Err(EffectError::UnknownVariable(variable.clone()));
                }
                if *window_frames == 0 {
                    return bad("window_frames must be at least 1");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub position: Vec3,
    pub birth: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ghost {
    pub frame: u32,
    pub points: Arc<Vec<CloudPoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub frame: u32,
    /// `null` marks a gap.
    pub value: Option<f64>,
}

/// Live history of one effect.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectState {
    Trajectory(VecDeque<Marker>),
    Ghost(VecDeque<Ghost>),
    Graph(VecDeque<Sample>),
}

/// What a tracker produced on the current frame, as effects see it.
#[derive(Debug, Clone, Copy)]
pub struct TrackerFrame<'a> {
    pub class: TrackerClass,
    pub world: Option<Vec3>,
    /// Color-blob pixels, row-major indices.
    pub component: &'a [u32],
}

/// Append a marker for a valid point and drop markers aged `ttl` or more.
pub fn update_trajectory(markers: &mut VecDeque<Marker>, frame: u32, ttl: u32, world: Option<Vec3>) {
    if let Some(p) = world {
        markers.push_back(Marker { position: p, birth: frame });
    }
    while markers.front().is_some_and(|m| frame.saturating_sub(m.birth) >= ttl) {
        markers.pop_front();
    }
}

/// Clone points for a ghost: the blob's pixels for a color tracker, every
/// point within `body_radius` of the keypoint for a body tracker.
pub fn ghost_points(
    frame: &RgbdFrame,
    k: &CameraIntrinsics,
    tf: &TrackerFrame<'_>,
    body_radius: f64,
    stride: u32,
) -> Vec<CloudPoint> {
    let stride = stride.max(1) as usize;
    match tf.class {
        TrackerClass::Color => {
            let mut px = tf.component.to_vec();
            px.sort_unstable();
            unproject_pixels(frame, k, &px).into_iter().step_by(stride).collect()
        }
        TrackerClass::Body => {
            let Some(c) = tf.world else { return Vec::new() };
            body_region(frame, k, c, body_radius).into_iter().step_by(stride).collect()
        }
        TrackerClass::Stationary => Vec::new(),
    }
}

fn body_region(frame: &RgbdFrame, k: &CameraIntrinsics, center: Vec3, radius: f64) -> Vec<CloudPoint> {
    let w = usize::from(k.width);
    let r2 = radius * radius;
    // Only rows and columns whose rays can reach the sphere are scanned. The
    // band is padded by a pixel to stay conservative.
    let z_near = (center.z - radius).max(1e-3);
    let (u_lo, u_hi) = span(center.x, center.z, radius, z_near, k.fx, k.cx, k.width);
    let (v_lo, v_hi) = span(center.y, center.z, radius, z_near, k.fy, k.cy, k.height);
    let mut out = Vec::new();
    for v in v_lo..v_hi {
        for u in u_lo..u_hi {
            let i = v * w + u;
            let d = frame.depth.data[i];
            if d == 0 {
                continue;
            }
            let z = f64::from(d) / 1000.0;
            let p = Vec3::new((u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z);
            let q = p - center;
            if q.dot(q) <= r2 {
                out.push(CloudPoint { position: [p.x as f32, p.y as f32, p.z as f32], color: frame.color.data[i] });
            }
        }
    }
    out
}

/// Pixel range covering every projection of the interval
/// `[a - r, a + r] / [z_near, z_far]`.
fn span(a: f64, z: f64, r: f64, z_near: f64, f: f64, c: f64, n: u16) -> (usize, usize) {
    let z_far = z + r;
    let cands = [(a - r) / z_near, (a - r) / z_far, (a + r) / z_near, (a + r) / z_far];
    let lo = cands.iter().cloned().fold(f64::INFINITY, f64::min) * f + c - 1.0;
    let hi = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * f + c + 2.0;
    let clamp = |x: f64| x.clamp(0.0, f64::from(n)) as usize;
    (clamp(lo.floor()), clamp(hi.ceil()))
}

/// Opacity of the ghost at `rank` (0 = newest) among `n`.
pub fn ghost_opacity(rank: usize, n: usize) -> f64 {
    if n <= 1 {
        return GHOST_OPACITY_NEWEST;
    }
    GHOST_OPACITY_NEWEST - (GHOST_OPACITY_NEWEST - GHOST_OPACITY_OLDEST) * rank as f64 / (n - 1) as f64
}

/// Append the registry's value (or a gap) and trim to `window`.
pub fn push_graph_sample(samples: &mut VecDeque<Sample>, variable: &str, reg: &VariableRegistry, window: u32) {
    samples.push_back(Sample { frame: reg.frame, value: reg.value(variable) });
    while samples.len() > window as usize {
        samples.pop_front();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub spec: EffectSpec,
    pub state: EffectState,
}

impl Effect {
    pub fn new(spec: EffectSpec) -> Self {
        let state = match spec.kind {
            EffectKind::Trajectory { .. } => EffectState::Trajectory(VecDeque::new()),
            EffectKind::Ghost { .. } => EffectState::Ghost(VecDeque::new()),
            EffectKind::Graph { .. } => EffectState::Graph(VecDeque::new()),
        };
        Self { spec, state }
    }

    pub fn reset(&mut self) {
        *self = Effect::new(self.spec.clone());
    }

    /// Advance by one frame. Frames before `start_frame` are ignored.
    pub fn update(
        &mut self,
        frame: &RgbdFrame,
        k: &CameraIntrinsics,
        reg: &VariableRegistry,
        tracker: Option<TrackerFrame<'_>>,
    ) {
        let f = reg.frame;
        if f < self.spec.start_frame {
            return;
        }
        match (&self.spec.kind, &mut self.state) {
            (EffectKind::Trajectory { ttl_frames, .. }, EffectState::Trajectory(markers)) => {
                update_trajectory(markers, f, *ttl_frames, tracker.and_then(|t| t.world));
            }
            (EffectKind::Ghost { cadence_frames, max_ghosts, body_radius, stride, .. }, EffectState::Ghost(ghosts)) => {
                if (f - self.spec.start_frame) % cadence_frames != 0 {
                    return;
                }
                let Some(tf) = tracker.filter(|t| t.world.is_some()) else { return };
                let points = ghost_points(frame, k, &tf, *body_radius, *stride);
                ghosts.push_back(Ghost { frame: f, points: Arc::new(points) });
                if let Some(max) = max_ghosts {
                    while ghosts.len() > *max {
                        ghosts.pop_front();
                    }
                }
            }
            (EffectKind::Graph { variable, window_frames, .. }, EffectState::Graph(samples)) => {
                push_graph_sample(samples, variable, reg, *window_frames);
            }
            _ => unreachable!("effect state always matches its spec"),
        }
    }

    pub fn geometry(&self, frame: u32) -> EffectGeometry {
        let id = self.spec.id.clone();
        match (&self.spec.kind, &self.state) {
            (EffectKind::Trajectory { radius, style, color, .. }, EffectState::Trajectory(markers)) => {
                EffectGeometry::Trajectory {
                    id,
                    style: *style,
                    radius: *radius,
                    color: *color,
                    markers: markers.iter().map(|m| MarkerOut { position: m.position, age: frame - m.birth }).collect(),
                }
            }
            (EffectKind::Ghost { .. }, EffectState::Ghost(ghosts)) => {
                let n = ghosts.len();
                EffectGeometry::Ghost {
                    id,
                    ghosts: ghosts
                        .iter()
                        .rev()
                        .enumerate()
                        .map(|(rank, g)| GhostOut {
                            frame: g.frame,
                            opacity: ghost_opacity(rank, n),
                            points: Arc::clone(&g.points),
                        })
                        .collect(),
                }
            }
            (EffectKind::Graph { variable, window_frames, chart }, EffectState::Graph(samples)) => {
                EffectGeometry::Graph {
                    id,
                    variable: variable.clone(),
                    chart: *chart,
                    window_frames: *window_frames,
                    samples: samples.iter().copied().collect(),
                }
            }
            _ => unreachable!("effect state always matches its spec"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerOut {
    pub position: Vec3,
    pub age: u32,
}

/// A ghost as it appears in a snapshot: positions flattened to
/// `[x0, y0, z0, x1, ...]` and colors to `[r0, g0, b0, r1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostOut {
    pub frame: u32,
    pub opacity: f64,
    pub points: Arc<Vec<CloudPoint>>,
}

impl Serialize for GhostOut {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let positions: Vec<f32> = self.points.iter().flat_map(|p| p.position).collect();
        let colors: Vec<u8> = self.points.iter().flat_map(|p| [p.color.r, p.color.g, p.color.b]).collect();
        let mut st = s.serialize_struct("GhostOut", 4)?;
        st.serialize_field("frame", &self.frame)?;
        st.serialize_field("opacity", &self.opacity)?;
        st.serialize_field("positions", &positions)?;
        st.serialize_field("colors", &colors)?;
        st.end()
    }
}

/// Effect contribution to a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "effect", rename_all = "lowercase")]
pub enum EffectGeometry {
    Trajectory { id: String, style: TrailStyle, radius: f64, color: Rgba, markers: Vec<MarkerOut> },
    Ghost { id: String, ghosts: Vec<GhostOut> },
    Graph { id: String, variable: String, chart: ChartKind, window_frames: u32, samples: Vec<Sample> },
}

impl EffectGeometry {
    /// Colored points for augmented cloud export.
    pub fn points(&self) -> Vec<CloudPoint> {
        match self {
            EffectGeometry::Trajectory { markers, color, .. } => {
                let c = Rgb8::new(
                    (color.r * 255.0).round() as u8,
                    (color.g * 255.0).round() as u8,
                    (color.b * 255.0).round() as u8,
                );
                markers
                    .iter()
                    .map(|m| CloudPoint {
                        position: [m.position.x as f32, m.position.y as f32, m.position.z as f32],
                        color: c,
                    })
                    .collect()
            }
            EffectGeometry::Ghost { ghosts, .. } => ghosts.iter().flat_map(|g| g.points.iter().copied()).collect(),
            EffectGeometry::Graph { .. } => Vec::new(),
        }
    }
}
