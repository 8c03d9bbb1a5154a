//! Dynamic parameters derived from tracked points: position, speed, distance,
//! angle and area, published per frame as named scalars.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::FPS;
use crate::geometry::Vec3;
use crate::tracking::{is_identifier, TrackedPoint, TrackerSet};

/// Frames between the two endpoints of the speed estimate (0.5 s at 30 FPS).
pub const SPEED_SPAN_FRAMES: u32 = 15;
/// Positions retained per tracker.
pub const WINDOW_LEN: usize = 16;
/// Arms shorter than this make an angle undefined.
pub const ANGLE_EPSILON_M: f64 = 1e-9;

/// Builtin names that cannot be declared.
pub const RESERVED: &[&str] = &["time"];

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("{kind:?} takes {expected} operand(s), got {got}")]
    OperandCount { kind: ParamKind, expected: usize, got: usize },
    #[error("parameter references unknown tracker '{0}'")]
    UnknownTracker(String),
    #[error("variable name '{0}' is already declared")]
    DuplicateName(String),
    #[error("'{0}' is not a valid variable name")]
    BadName(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
}

// ---------------------------------------------------------------------------
// Pure operations

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm()
}

/// Angle at `vertex` between the arms towards `a` and `c`, in degrees.
/// `None` when either arm is shorter than [`ANGLE_EPSILON_M`].
pub fn angle(a: Vec3, vertex: Vec3, c: Vec3) -> Option<f64> {
    let (u, w) = (a - vertex, c - vertex);
    let (nu, nw) = (u.norm(), w.norm());
    if nu <= ANGLE_EPSILON_M || nw <= ANGLE_EPSILON_M {
        return None;
    }
    let cos = (u.dot(w) / (nu * nw)).clamp(-1.0, 1.0);
    Some(cos.acos().to_degrees())
}

pub fn area3(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * (b - a).cross(c - a).norm()
}

/// Quad area as the fan `(a, b, c) + (a, c, d)` in selection order.
pub fn area4(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    area3(a, b, c) + area3(a, c, d)
}

/// Endpoint speed: magnitude and per-axis absolute rates in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speed {
    pub magnitude: f64,
    pub axes: Vec3,
}

/// Displacement between two samples `frames` apart, divided by the elapsed
/// time.
pub fn endpoint_speed(p0: Vec3, p1: Vec3, frames: u32) -> Speed {
    let dt = f64::from(frames) / f64::from(FPS);
    let d = p1 - p0;
    Speed { magnitude: d.norm() / dt, axes: d.abs() / dt }
}

/// The last [`WINDOW_LEN`] positions of one tracker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleWindow {
    entries: VecDeque<(u32, Option<Vec3>)>,
}

impl SampleWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record `frame`. Entries must arrive in increasing frame order; a
    /// non-consecutive frame discards the history.
    pub fn push(&mut self, frame: u32, position: Option<Vec3>) {
        if let Some(&(last, _)) = self.entries.back() {
            if frame != last + 1 {
                self.entries.clear();
            }
        }
        if self.entries.len() == WINDOW_LEN {
            self.entries.pop_front();
        }
        self.entries.push_back((frame, position));
    }

    pub fn get(&self, frame: u32) -> Option<Vec3> {
        self.entries.iter().find(|(f, _)| *f == frame).and_then(|(_, p)| *p)
    }

    pub fn latest(&self) -> Option<(u32, Option<Vec3>)> {
        self.entries.back().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Speed between the newest entry and the one 15 frames earlier.
    pub fn speed(&self) -> Option<Speed> {
        let (t1, p1) = self.latest()?;
        let t0 = t1.checked_sub(SPEED_SPAN_FRAMES)?;
        Some(endpoint_speed(self.get(t0)?, p1?, SPEED_SPAN_FRAMES))
    }
}

// ---------------------------------------------------------------------------
// Declared parameters

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Position,
    Speed,
    Distance,
    Angle,
    Area3,
    Area4,
}

impl ParamKind {
    pub fn operand_count(self) -> usize {
        match self {
            ParamKind::Position | ParamKind::Speed => 1,
            ParamKind::Distance => 2,
            ParamKind::Angle | ParamKind::Area3 => 3,
            ParamKind::Area4 => 4,
        }
    }

    /// Default name stem: `distance_1`, `angle_1`, `area_1`, ...
    pub fn stem(self) -> &'static str {
        match self {
            ParamKind::Position => "position",
            ParamKind::Speed => "speed",
            ParamKind::Distance => "distance",
            ParamKind::Angle => "angle",
            ParamKind::Area3 | ParamKind::Area4 => "area",
        }
    }

    /// Scalar names contributed by a parameter called `name`.
    pub fn outputs(self, name: &str) -> Vec<String> {
        match self {
            ParamKind::Position => vec![format!("{name}.x"), format!("{name}.y"), format!("{name}.z")],
            ParamKind::Speed => {
                vec![name.to_string(), format!("{name}.x"), format!("{name}.y"), format!("{name}.z")]
            }
            _ => vec![name.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub operands: Vec<String>,
    /// Output name; assigned from the kind's stem when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Scalar names every tracker contributes.
pub fn tracker_outputs(tracker: &str) -> [String; 7] {
    [
        format!("{tracker}.x"),
        format!("{tracker}.y"),
        format!("{tracker}.z"),
        format!("{tracker}.speed"),
        format!("{tracker}.speed.x"),
        format!("{tracker}.speed.y"),
        format!("{tracker}.speed.z"),
    ]
}

/// Snapshot of every declared scalar for one frame. `None` marks a value
/// that is unavailable this frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRegistry {
    pub frame: u32,
    pub values: BTreeMap<String, Option<f64>>,
}

impl VariableRegistry {
    pub fn empty(frame: u32) -> Self {
        Self { frame, values: BTreeMap::new() }
    }

    /// `Some(None)` for a declared but unavailable name, `None` for an
    /// undeclared one.
    pub fn lookup(&self, name: &str) -> Option<Option<f64>> {
        self.values.get(name).copied()
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied().flatten()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn time(&self) -> f64 {
        f64::from(self.frame) / f64::from(FPS)
    }
}

/// Registered parameters plus the per-tracker speed windows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Kinematics {
    specs: Vec<(String, ParamSpec)>,
    windows: BTreeMap<String, SampleWindow>,
}

impl Kinematics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn specs(&self) -> impl Iterator<Item = (&str, &ParamSpec)> {
        self.specs.iter().map(|(n, s)| (n.as_str(), s))
    }

    fn next_default_name(&self, kind: ParamKind, taken: &dyn Fn(&str) -> bool) -> String {
        let mut n = 1 + self.specs.iter().filter(|(_, s)| s.kind.stem() == kind.stem()).count();
        loop {
            let name = format!("{}_{n}", kind.stem());
            if !taken(&name) {
                return name;
            }
            n += 1;
        }
    }

    /// Every scalar name currently declared by trackers and parameters.
    pub fn declared_names(&self, trackers: &TrackerSet) -> Vec<String> {
        let mut names: Vec<String> = trackers.iter().flat_map(|t| tracker_outputs(&t.id.name)).collect();
        for (n, s) in &self.specs {
            names.extend(s.kind.outputs(n));
        }
        names
    }

    /// Register a parameter, returning its resolved output name.
    pub fn add(&mut self, spec: ParamSpec, trackers: &TrackerSet) -> Result<String, KinematicsError> {
        let expected = spec.kind.operand_count();
        if spec.operands.len() != expected {
            return Err(KinematicsError::OperandCount { kind: spec.kind, expected, got: spec.operands.len() });
        }
        if let Some(missing) = spec.operands.iter().find(|o| !trackers.contains(o)) {
            return Err(KinematicsError::UnknownTracker(missing.clone()));
        }
        let existing = self.declared_names(trackers);
        let clashes = |candidate: &str| {
            trackers.contains(candidate)
                || RESERVED.contains(&candidate)
                || spec.kind.outputs(candidate).iter().any(|o| existing.contains(o))
                || self.specs.iter().any(|(n, _)| n == candidate)
        };
        let name = match &spec.name {
            Some(n) => {
                if !is_identifier(n) {
                    return Err(KinematicsError::BadName(n.clone()));
                }
                if clashes(n) {
                    return Err(KinematicsError::DuplicateName(n.clone()));
                }
                n.clone()
            }
            None => self.next_default_name(spec.kind, &clashes),
        };
        self.specs.push((name.clone(), ParamSpec { name: Some(name.clone()), ..spec }));
        Ok(name)
    }

    pub fn remove(&mut self, name: &str) -> Result<ParamSpec, KinematicsError> {
        let i = self
            .specs
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| KinematicsError::UnknownParam(name.to_string()))?;
        Ok(self.specs.remove(i).1)
    }

    /// Parameters that reference `tracker`.
    pub fn dependents(&self, tracker: &str) -> Vec<String> {
        self.specs.iter().filter(|(_, s)| s.operands.iter().any(|o| o == tracker)).map(|(n, _)| n.clone()).collect()
    }

    pub fn reset(&mut self) {
        self.windows.clear();
    }

    pub fn window(&self, tracker: &str) -> Option<&SampleWindow> {
        self.windows.get(tracker)
    }

    /// Fold the frame's tracked points into the speed windows and publish the
    /// registry. Every declared name is present, unavailable or not.
    pub fn commit_frame(&mut self, frame: u32, points: &[TrackedPoint]) -> Arc<VariableRegistry> {
        self.windows.retain(|name, _| points.iter().any(|p| &p.tracker == name));
        let mut values = BTreeMap::new();
        let mut current: BTreeMap<&str, Option<Vec3>> = BTreeMap::new();
        for p in points {
            let pos = p.valid.then_some(p.world);
            current.insert(&p.tracker, pos);
            let window = self.windows.entry(p.tracker.clone()).or_default();
            window.push(frame, pos);
            let speed = window.speed();
            let [x, y, z, s, sx, sy, sz] = tracker_outputs(&p.tracker);
            values.insert(x, pos.map(|v| v.x));
            values.insert(y, pos.map(|v| v.y));
            values.insert(z, pos.map(|v| v.z));
            values.insert(s, speed.map(|s| s.magnitude));
            values.insert(sx, speed.map(|s| s.axes.x));
            values.insert(sy, speed.map(|s| s.axes.y));
            values.insert(sz, speed.map(|s| s.axes.z));
        }
        for (name, spec) in &self.specs {
            let ops: Option<Vec<Vec3>> =
                spec.operands.iter().map(|o| current.get(o.as_str()).copied().flatten()).collect();
            match spec.kind {
                ParamKind::Position => {
                    for (out, c) in spec.kind.outputs(name).into_iter().zip(0..) {
                        values.insert(out, ops.as_ref().map(|o| o[0].to_array()[c]));
                    }
                }
                ParamKind::Speed => {
                    let speed = self.windows.get(&spec.operands[0]).and_then(SampleWindow::speed);
                    let outs = spec.kind.outputs(name);
                    values.insert(outs[0].clone(), speed.map(|s| s.magnitude));
                    for (out, c) in outs[1..].iter().zip(0..) {
                        values.insert(out.clone(), speed.map(|s| s.axes.to_array()[c]));
                    }
                }
                ParamKind::Distance => {
                    values.insert(name.clone(), ops.map(|o| distance(o[0], o[1])));
                }
                ParamKind::Angle => {
                    values.insert(name.clone(), ops.and_then(|o| angle(o[0], o[1], o[2])));
                }
                ParamKind::Area3 => {
                    values.insert(name.clone(), ops.map(|o| area3(o[0], o[1], o[2])));
                }
                ParamKind::Area4 => {
                    values.insert(name.clone(), ops.map(|o| area4(o[0], o[1], o[2], o[3])));
                }
            }
        }
        for v in values.values_mut() {
            if v.is_some_and(|x| !x.is_finite()) {
                *v = None;
            }
        }
        Arc::new(VariableRegistry { frame, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::TrackerKind;

    fn tp(name: &str, frame: u32, world: Vec3, valid: bool) -> TrackedPoint {
        TrackedPoint { tracker: name.into(), frame, world, valid }
    }

    fn anchors(names: &[&str]) -> TrackerSet {
        let mut set = TrackerSet::new();
        for n in names {
            set.insert(Some(n.to_string()), TrackerKind::Stationary { position: Vec3::ZERO }).unwrap();
        }
        set
    }

    #[test]
    fn fixed_cases() {
        assert_eq!(distance(Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(distance(Vec3::X, Vec3::X), 0.0);
        assert_eq!(angle(Vec3::X, Vec3::ZERO, Vec3::Y), Some(90.0));
        assert_eq!(angle(Vec3::X, Vec3::ZERO, Vec3::X * 2.0), Some(0.0));
        assert_eq!(angle(Vec3::X, Vec3::ZERO, -Vec3::X), Some(180.0));
        let a45 = angle(Vec3::new(1.0, 1.0, 0.0), Vec3::ZERO, Vec3::X).unwrap();
        assert!((a45 - 45.0).abs() < 1e-12);
        assert_eq!(area3(Vec3::ZERO, Vec3::X, Vec3::Y), 0.5);
        assert_eq!(area4(Vec3::ZERO, Vec3::X, Vec3::new(1.0, 1.0, 0.0), Vec3::Y), 1.0);
        assert_eq!(area3(Vec3::ZERO, Vec3::X, Vec3::X * 2.0), 0.0);
    }

    #[test]
    fn degenerate_arm_is_unavailable() {
        assert_eq!(angle(Vec3::ZERO, Vec3::ZERO, Vec3::Y), None);
        assert_eq!(angle(Vec3::X, Vec3::ZERO, Vec3::new(0.0, 1e-10, 0.0)), None);
    }

    #[test]
    fn linear_motion_speed() {
        let mut w = SampleWindow::new();
        for f in 0..=15 {
            w.push(f, Some(Vec3::new(0.1 * f64::from(f), 0.0, 1.0)));
        }
        let s = w.speed().unwrap();
        assert_eq!(s.magnitude, 3.0);
        assert_eq!(s.axes, Vec3::new(3.0, 0.0, 0.0));
    }

    #[test]
    fn closed_loop_speed_is_zero() {
        let mut w = SampleWindow::new();
        for f in 0..=15u32 {
            let a = std::f64::consts::TAU * f64::from(f) / 15.0;
            let p = if f % 15 == 0 { Vec3::new(1.0, 0.0, 2.0) } else { Vec3::new(a.cos(), a.sin(), 2.0) };
            w.push(f, Some(p));
        }
        assert_eq!(w.speed().unwrap().magnitude, 0.0);
    }

    #[test]
    fn speed_needs_both_endpoints() {
        let mut w = SampleWindow::new();
        for f in 0..15 {
            w.push(f, Some(Vec3::ZERO));
        }
        assert!(w.speed().is_none());
        w.push(15, Some(Vec3::ZERO));
        assert_eq!(w.speed().unwrap().magnitude, 0.0);
        w.push(16, None);
        assert!(w.speed().is_none());
        // Frame 1 is still valid, but frame 17's own sample is missing too.
        w.push(17, Some(Vec3::ZERO));
        assert_eq!(w.speed().unwrap().magnitude, 0.0);
        assert_eq!(w.len(), WINDOW_LEN);
    }

    #[test]
    fn window_resets_on_gap() {
        let mut w = SampleWindow::new();
        for f in 0..10 {
            w.push(f, Some(Vec3::ZERO));
        }
        w.push(20, Some(Vec3::X));
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn registry_enumerates_all_names() {
        let set = anchors(&["obj_1"]);
        let mut kin = Kinematics::new();
        let name = kin
            .add(
                ParamSpec { kind: ParamKind::Distance, operands: vec!["obj_1".into(), "obj_1".into()], name: None },
                &set,
            )
            .unwrap();
        assert_eq!(name, "distance_1");
        let reg = kin.commit_frame(0, &[tp("obj_1", 0, Vec3::new(0.1, 0.2, 1.0), true)]);
        let keys: Vec<&str> = reg.values.keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            [
                "distance_1",
                "obj_1.speed",
                "obj_1.speed.x",
                "obj_1.speed.y",
                "obj_1.speed.z",
                "obj_1.x",
                "obj_1.y",
                "obj_1.z"
            ]
        );
        assert_eq!(reg.value("obj_1.x"), Some(0.1));
        assert_eq!(reg.value("obj_1.z"), Some(1.0));
        assert_eq!(reg.lookup("obj_1.speed"), Some(None));
        assert_eq!(reg.value("distance_1"), Some(0.0));
    }

    #[test]
    fn lost_tracker_propagates_unavailable() {
        let set = anchors(&["obj_1", "anchor_1"]);
        let mut kin = Kinematics::new();
        kin.add(
            ParamSpec { kind: ParamKind::Distance, operands: vec!["obj_1".into(), "anchor_1".into()], name: None },
            &set,
        )
        .unwrap();
        let reg = kin.commit_frame(0, &[tp("obj_1", 0, Vec3::X, false), tp("anchor_1", 0, Vec3::ZERO, true)]);
        for n in ["obj_1.x", "obj_1.y", "obj_1.z", "distance_1"] {
            assert_eq!(reg.lookup(n), Some(None), "{n}");
        }
        assert_eq!(reg.value("anchor_1.x"), Some(0.0));
    }

    #[test]
    fn spec_registration_errors() {
        let set = anchors(&["a", "b", "c"]);
        let mut kin = Kinematics::new();
        let two = |kind| ParamSpec { kind, operands: vec!["a".into(), "b".into()], name: None };
        assert!(matches!(kin.add(two(ParamKind::Angle), &set), Err(KinematicsError::OperandCount { .. })));
        assert_eq!(
            kin.add(ParamSpec { kind: ParamKind::Distance, operands: vec!["a".into(), "zz".into()], name: None }, &set),
            Err(KinematicsError::UnknownTracker("zz".into()))
        );
        kin.add(ParamSpec { name: Some("gap".into()), ..two(ParamKind::Distance) }, &set).unwrap();
        assert_eq!(
            kin.add(ParamSpec { name: Some("gap".into()), ..two(ParamKind::Distance) }, &set),
            Err(KinematicsError::DuplicateName("gap".into()))
        );
        assert_eq!(
            kin.add(ParamSpec { name: Some("a".into()), ..two(ParamKind::Distance) }, &set),
            Err(KinematicsError::DuplicateName("a".into()))
        );
        assert_eq!(
            kin.add(ParamSpec { name: Some("time".into()), ..two(ParamKind::Distance) }, &set),
            Err(KinematicsError::DuplicateName("time".into()))
        );
        // Area3 and Area4 share the `area_` stem.
        let tri = ParamSpec { kind: ParamKind::Area3, operands: vec!["a".into(), "b".into(), "c".into()], name: None };
        assert_eq!(kin.add(tri, &set).unwrap(), "area_1");
        let quad = ParamSpec {
            kind: ParamKind::Area4,
            operands: vec!["a".into(), "b".into(), "c".into(), "a".into()],
            name: None,
        };
        assert_eq!(kin.add(quad, &set).unwrap(), "area_2");
    }

    #[test]
    fn stationary_speed_is_exactly_zero_once_full() {
        let set = anchors(&["anchor_1"]);
        let mut kin = Kinematics::new();
        let p = Vec3::new(0.123456789, -0.5, 1.987654321);
        for f in 0..40 {
            let reg = kin.commit_frame(f, &[tp("anchor_1", f, p, true)]);
            if f >= SPEED_SPAN_FRAMES {
                assert_eq!(reg.value("anchor_1.speed"), Some(0.0));
            } else {
                assert_eq!(reg.value("anchor_1.speed"), None);
            }
        }
        let _ = set;
    }

    #[test]
    fn position_and_speed_aliases() {
        let set = anchors(&["obj_1"]);
        let mut kin = Kinematics::new();
        let one = |kind| ParamSpec { kind, operands: vec!["obj_1".into()], name: None };
        assert_eq!(kin.add(one(ParamKind::Position), &set).unwrap(), "position_1");
        assert_eq!(kin.add(one(ParamKind::Speed), &set).unwrap(), "speed_1");
        let mut reg = None;
        for f in 0..16u32 {
            reg = Some(kin.commit_frame(f, &[tp("obj_1", f, Vec3::new(0.1 * f64::from(f), 0.0, 1.0), true)]));
        }
        let reg = reg.unwrap();
        assert_eq!(reg.value("position_1.x"), reg.value("obj_1.x"));
        assert_eq!(reg.value("speed_1"), reg.value("obj_1.speed"));
        assert_eq!(reg.value("speed_1.y"), Some(0.0));
    }
}
