//! Virtual objects, their bindings to trackers and variables, and per-frame
//! evaluation into self-contained object states.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{SourceExpr, Template, UnknownVariable, DEFAULT_PRECISION, MAX_PRECISION};
use crate::geometry::{Quat, Rgba, Vec3};
use crate::kinematics::{distance, VariableRegistry};
use crate::tracking::is_identifier;

/// Labels float above the tracked point. World up is -y.
pub const DEFAULT_TEXT_OFFSET: Vec3 = Vec3::new(0.0, -0.15, 0.0);
/// Lower bound applied to scale after a property mapping.
pub const MIN_SCALE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("object id '{0}' is not a valid identifier")]
    BadId(String),
    #[error("object id '{0}' already in use")]
    DuplicateObject(String),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("unknown tracker '{0}'")]
    UnknownTracker(String),
    #[error("object '{0}' is already bound")]
    AlreadyBound(String),
    #[error("links are placed by their endpoints and cannot be bound ('{0}')")]
    LinkBinding(String),
    #[error("object '{object}': {msg}")]
    Invalid { object: String, msg: String },
    #[error("object '{object}': property {property:?} does not apply to {kind} objects")]
    PropertyKind { object: String, property: Property, kind: &'static str },
    #[error("object '{object}': {source}")]
    Variable {
        object: String,
        #[source]
        source: UnknownVariable,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HighlightShape {
    Box,
    Sphere,
    Cylinder,
    Circle2d,
    Rect2d,
}

/// One end of a connected link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Tracker(String),
    Fixed(Vec3),
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn precision_default() -> u8 {
    DEFAULT_PRECISION
}
fn text_size() -> f64 {
    0.05
}
fn highlight_scale() -> Vec3 {
    Vec3::splat(0.1)
}
fn highlight_color() -> Rgba {
    Rgba::new(1.0, 0.85, 0.1, 0.5)
}
fn visual_size() -> [f64; 2] {
    [0.32, 0.24]
}
fn link_thickness() -> f64 {
    0.005
}
fn white() -> Rgba {
    Rgba::WHITE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectKind {
    Text {
        template: Template,
        #[serde(default = "yes")]
        billboard: bool,
        #[serde(default = "precision_default")]
        precision: u8,
        /// Glyph height in meters.
        #[serde(default = "text_size")]
        size: f64,
        #[serde(default = "white")]
        color: Rgba,
        #[serde(default)]
        orientation: Quat,
    },
    Highlight {
        shape: HighlightShape,
        #[serde(default = "highlight_scale")]
        scale: Vec3,
        #[serde(default = "highlight_color")]
        color: Rgba,
        #[serde(default)]
        orientation: Quat,
    },
    /// Image, icon, video, web page or graph panel. The engine only places
    /// it; content is resolved by the viewer.
    Visual {
        source: String,
        #[serde(default = "visual_size")]
        size: [f64; 2],
        #[serde(default = "one")]
        opacity: f64,
        #[serde(default = "yes")]
        billboard: bool,
        #[serde(default)]
        orientation: Quat,
        /// Graph effect whose samples feed this panel.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        series: Option<String>,
    },
    Link {
        a: Endpoint,
        b: Endpoint,
        #[serde(default = "link_thickness")]
        thickness: f64,
        #[serde(default = "white")]
        color: Rgba,
    },
}

impl ObjectKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Text { .. } => "text",
            ObjectKind::Highlight { .. } => "highlight",
            ObjectKind::Visual { .. } => "visual",
            ObjectKind::Link { .. } => "link",
        }
    }

    /// Offset used when a binding does not specify one.
    pub fn default_offset(&self) -> Vec3 {
        match self {
            ObjectKind::Text { .. } => DEFAULT_TEXT_OFFSET,
            _ => Vec3::ZERO,
        }
    }

    fn billboard(&self) -> bool {
        match self {
            ObjectKind::Text { billboard, .. } | ObjectKind::Visual { billboard, .. } => *billboard,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualObject {
    pub id: String,
    #[serde(flatten)]
    pub kind: ObjectKind,
    /// World placement while the object is not bound to a tracker.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub position: Vec3,
}

fn is_zero(v: &Vec3) -> bool {
    *v == Vec3::ZERO
}

/// Object follows tracker: position = tracked world + offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub object: String,
    pub tracker: String,
    /// Kind-specific default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Scale,
    Rotation,
    #[serde(alias = "position-offset", alias = "offset")]
    PositionOffset,
    Opacity,
    #[serde(alias = "color-intensity")]
    ColorIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::X,
            Axis::Y => Vec3::Y,
            Axis::Z => Vec3::Z,
        }
    }

    fn set(self, v: &mut Vec3, value: f64) {
        match self {
            Axis::X => v.x = value,
            Axis::Y => v.y = value,
            Axis::Z => v.z = value,
        }
    }
}

/// `property = clamp(a * source + b)`.
///
/// `axis` selects the scale or offset component to drive (all three scale
/// components and the y offset when absent) and the rotation axis (local z
/// when absent). Rotation values are degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyBinding {
    pub object: String,
    pub property: Property,
    pub source: SourceExpr,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
}

impl PropertyBinding {
    /// Mapped and clamped value, `None` while the source is unavailable.
    pub fn value(&self, reg: &VariableRegistry) -> Option<f64> {
        let v = self.a * self.source.expr.eval(reg)? + self.b;
        if !v.is_finite() {
            return None;
        }
        Some(match self.property {
            Property::Scale => v.max(MIN_SCALE),
            Property::Opacity | Property::ColorIntensity => v.clamp(0.0, 1.0),
            Property::Rotation | Property::PositionOffset => v,
        })
    }
}

/// Placement of the source and virtual cameras, used for billboarding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CameraPath {
    Fixed {
        position: Vec3,
    },
    /// Circles `target` at `radius`; azimuth 0 sits on the source-camera
    /// side and elevation lifts the camera towards world up.
    Orbit {
        target: Vec3,
        radius: f64,
        period_frames: u32,
        #[serde(default)]
        elevation_deg: f64,
        #[serde(default)]
        phase_deg: f64,
    },
}

impl Default for CameraPath {
    fn default() -> Self {
        CameraPath::Fixed { position: Vec3::ZERO }
    }
}

impl CameraPath {
    pub fn position(&self, frame: u32) -> Vec3 {
        match *self {
            CameraPath::Fixed { position } => position,
            CameraPath::Orbit { target, radius, period_frames, elevation_deg, phase_deg } => {
                let turns = f64::from(frame % period_frames.max(1)) / f64::from(period_frames.max(1));
                let az = (phase_deg + 360.0 * turns).to_radians();
                let el = elevation_deg.to_radians();
                target + Vec3::new(az.sin() * el.cos(), -el.sin(), -az.cos() * el.cos()) * radius
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            CameraPath::Fixed { position } if position.is_finite() => Ok(()),
            CameraPath::Orbit { target, radius, period_frames, elevation_deg, phase_deg }
                if target.is_finite()
                    && *radius > 0.0
                    && radius.is_finite()
                    && *period_frames > 0
                    && elevation_deg.is_finite()
                    && phase_deg.is_finite() =>
            {
                Ok(())
            }
            _ => Err("camera path needs finite values, radius > 0 and period > 0".into()),
        }
    }
}

/// Orientation whose local +z points from `position` to `camera` and whose
/// local +y leans towards world up. `None` when the points coincide.
pub fn billboard_orient(position: Vec3, camera: Vec3) -> Option<Quat> {
    let z = (camera - position).normalized()?;
    let up = if Vec3::UP.cross(z).norm() > 1e-9 { Vec3::UP } else { Vec3::Z };
    let y = (up - z * up.dot(z)).normalized()?;
    let x = y.cross(z);
    Some(Quat::from_basis(x, y, z))
}

/// Where a tracker stands on the frame being evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    /// Current point, or the last resolved one while lost; `None` before the
    /// first resolution.
    pub world: Option<Vec3>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectBody {
    Text {
        position: Vec3,
        orientation: Quat,
        scale: Vec3,
        size: f64,
        color: Rgba,
        text: String,
    },
    Highlight {
        shape: HighlightShape,
        position: Vec3,
        orientation: Quat,
        scale: Vec3,
        color: Rgba,
    },
    Visual {
        position: Vec3,
        orientation: Quat,
        scale: Vec3,
        size: [f64; 2],
        opacity: f64,
        source: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        series: Option<String>,
    },
    Link {
        a: Vec3,
        b: Vec3,
        length: f64,
        thickness: f64,
        color: Rgba,
    },
}

/// Evaluated state of one object on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: String,
    #[serde(flatten)]
    pub body: ObjectBody,
    /// Set while a tracker it depends on is lost; the object holds its last
    /// resolved placement.
    pub stale: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub objects: Vec<VirtualObject>,
    #[serde(default)]
    pub bindings: Vec<Binding>,
    #[serde(default)]
    pub property_bindings: Vec<PropertyBinding>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Option<&VirtualObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut VirtualObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn binding(&self, object: &str) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.object == object)
    }

    /// Next free `<kind>_<n>` id.
    pub fn default_id(&self, kind: &ObjectKind) -> String {
        let stem = match kind {
            ObjectKind::Text { .. } => "label",
            ObjectKind::Highlight { .. } => "highlight",
            ObjectKind::Visual { .. } => "visual",
            ObjectKind::Link { .. } => "link",
        };
        (1..).map(|n| format!("{stem}_{n}")).find(|id| self.object(id).is_none()).unwrap()
    }

    pub fn add_object(&mut self, obj: VirtualObject, tracker_exists: &dyn Fn(&str) -> bool) -> Result<(), SceneError> {
        if self.object(&obj.id).is_some() {
            return Err(SceneError::DuplicateObject(obj.id));
        }
        check_object(&obj, tracker_exists)?;
        self.objects.push(obj);
        Ok(())
    }

    /// Bind `object` to `tracker`. Rejects dangling references.
    pub fn attach(&mut self, binding: Binding, tracker_exists: &dyn Fn(&str) -> bool) -> Result<(), SceneError> {
        let obj = self.object(&binding.object).ok_or_else(|| SceneError::UnknownObject(binding.object.clone()))?;
        if matches!(obj.kind, ObjectKind::Link { .. }) {
            return Err(SceneError::LinkBinding(binding.object));
        }
        if !tracker_exists(&binding.tracker) {
            return Err(SceneError::UnknownTracker(binding.tracker));
        }
        if self.binding(&binding.object).is_some() {
            return Err(SceneError::AlreadyBound(binding.object));
        }
        if let Some(o) = binding.offset.filter(|o| !o.is_finite()) {
            return Err(SceneError::Invalid { object: binding.object, msg: format!("non-finite offset {o:?}") });
        }
        self.bindings.push(binding);
        Ok(())
    }

    pub fn add_property_binding(
        &mut self,
        pb: PropertyBinding,
        declared: &dyn Fn(&str) -> bool,
    ) -> Result<(), SceneError> {
        check_property_binding(self, &pb, declared)?;
        self.property_bindings.push(pb);
        Ok(())
    }

    /// Remove an object together with its binding and property bindings.
    pub fn remove_object(&mut self, id: &str) -> Result<VirtualObject, SceneError> {
        let i = self.objects.iter().position(|o| o.id == id).ok_or_else(|| SceneError::UnknownObject(id.into()))?;
        self.bindings.retain(|b| b.object != id);
        self.property_bindings.retain(|p| p.object != id);
        Ok(self.objects.remove(i))
    }

    /// Objects that would dangle if `tracker` were removed.
    pub fn tracker_dependents(&self, tracker: &str) -> Vec<String> {
        let mut out: BTreeSet<String> =
            self.bindings.iter().filter(|b| b.tracker == tracker).map(|b| b.object.clone()).collect();
        for o in &self.objects {
            if let ObjectKind::Link { a, b, .. } = &o.kind {
                if [a, b].iter().any(|e| matches!(e, Endpoint::Tracker(t) if t == tracker)) {
                    out.insert(o.id.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    /// Full consistency check against the declared trackers and variables.
    pub fn validate(
        &self,
        tracker_exists: &dyn Fn(&str) -> bool,
        declared: &dyn Fn(&str) -> bool,
    ) -> Result<(), SceneError> {
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                return Err(SceneError::DuplicateObject(o.id.clone()));
            }
            check_object(o, tracker_exists)?;
            if let ObjectKind::Text { template, .. } = &o.kind {
                template.check(declared).map_err(|source| SceneError::Variable { object: o.id.clone(), source })?;
            }
        }
        let mut bound = BTreeSet::new();
        for b in &self.bindings {
            let obj = self.object(&b.object).ok_or_else(|| SceneError::UnknownObject(b.object.clone()))?;
            if matches!(obj.kind, ObjectKind::Link { .. }) {
                return Err(SceneError::LinkBinding(b.object.clone()));
            }
            if !tracker_exists(&b.tracker) {
                return Err(SceneError::UnknownTracker(b.tracker.clone()));
            }
            if !bound.insert(b.object.as_str()) {
                return Err(SceneError::AlreadyBound(b.object.clone()));
            }
        }
        for pb in &self.property_bindings {
            check_property_binding(self, pb, declared)?;
        }
        Ok(())
    }

    /// Evaluate every object for one frame. Objects whose tracker has never
    /// resolved are left out.
    pub fn evaluate(
        &self,
        reg: &VariableRegistry,
        anchors: &BTreeMap<String, Anchor>,
        camera: Vec3,
    ) -> Vec<ObjectState> {
        let anchor = |name: &str| anchors.get(name).copied().unwrap_or(Anchor { world: None, valid: false });
        let mut out = Vec::with_capacity(self.objects.len());
        for obj in &self.objects {
            let mut scale = None::<Vec3>;
            let mut rotation = None::<Quat>;
            let mut offset = None::<Vec3>;
            let mut opacity = None::<f64>;
            let mut intensity = None::<f64>;
            let binding = self.binding(&obj.id);
            let base_offset = binding.map_or(Vec3::ZERO, |b| b.offset.unwrap_or_else(|| obj.kind.default_offset()));
            for pb in self.property_bindings.iter().filter(|p| p.object == obj.id) {
                let Some(v) = pb.value(reg) else { continue };
                match pb.property {
                    Property::Scale => {
                        let s = scale.get_or_insert(authored_scale(&obj.kind));
                        match pb.axis {
                            Some(ax) => ax.set(s, v),
                            None => *s = Vec3::splat(v),
                        }
                    }
                    Property::Rotation => {
                        let axis = pb.axis.unwrap_or(Axis::Z).unit();
                        let q = Quat::from_axis_angle(axis, v.to_radians());
                        rotation = Some(rotation.map_or(q, |r| r.mul(q)));
                    }
                    Property::PositionOffset => pb.axis.unwrap_or(Axis::Y).set(offset.get_or_insert(base_offset), v),
                    Property::Opacity => opacity = Some(v),
                    Property::ColorIntensity => intensity = Some(v),
                }
            }

            if let ObjectKind::Link { a, b, thickness, color } = &obj.kind {
                let resolve = |e: &Endpoint| match e {
                    Endpoint::Fixed(p) => Some((*p, true)),
                    Endpoint::Tracker(t) => {
                        let an = anchor(t);
                        an.world.map(|w| (w, an.valid))
                    }
                };
                let (Some((pa, va)), Some((pb, vb))) = (resolve(a), resolve(b)) else { continue };
                let mut color = apply_intensity(*color, intensity);
                if let Some(o) = opacity {
                    color.a = o;
                }
                out.push(ObjectState {
                    id: obj.id.clone(),
                    body: ObjectBody::Link { a: pa, b: pb, length: distance(pa, pb), thickness: *thickness, color },
                    stale: !(va && vb),
                });
                continue;
            }

            let (origin, stale) = match binding {
                Some(b) => {
                    let an = anchor(&b.tracker);
                    match an.world {
                        Some(w) => (w, !an.valid),
                        None => continue,
                    }
                }
                None => (obj.position, false),
            };
            let position = origin + offset.unwrap_or(base_offset);
            let authored = authored_orientation(&obj.kind);
            let mut orientation =
                if obj.kind.billboard() { billboard_orient(position, camera).unwrap_or(authored) } else { authored };
            if let Some(r) = rotation {
                orientation = orientation.mul(r).normalized();
            }
            let scale = scale.unwrap_or_else(|| authored_scale(&obj.kind));
            let body = match &obj.kind {
                ObjectKind::Text { template, precision, size, color, .. } => {
                    let mut color = apply_intensity(*color, intensity);
                    if let Some(o) = opacity {
                        color.a = o;
                    }
                    ObjectBody::Text {
                        position,
                        orientation,
                        scale,
                        size: *size,
                        color,
                        text: template.render(reg, *precision),
                    }
                }
                ObjectKind::Highlight { shape, color, .. } => {
                    let mut color = apply_intensity(*color, intensity);
                    if let Some(o) = opacity {
                        color.a = o;
                    }
                    ObjectBody::Highlight { shape: *shape, position, orientation, scale, color }
                }
                ObjectKind::Visual { source, size, opacity: base, series, .. } => ObjectBody::Visual {
                    position,
                    orientation,
                    scale,
                    size: *size,
                    opacity: opacity.unwrap_or(*base),
                    source: source.clone(),
                    series: series.clone(),
                },
                ObjectKind::Link { .. } => unreachable!(),
            };
            out.push(ObjectState { id: obj.id.clone(), body, stale });
        }
        out
    }
}

fn authored_scale(kind: &ObjectKind) -> Vec3 {
    match kind {
        ObjectKind::Highlight { scale, .. } => *scale,
        _ => Vec3::splat(1.0),
    }
}

fn authored_orientation(kind: &ObjectKind) -> Quat {
    match kind {
        ObjectKind::Text { orientation, .. }
        | ObjectKind::Highlight { orientation, .. }
        | ObjectKind::Visual { orientation, .. } => orientation.normalized(),
        ObjectKind::Link { .. } => Quat::IDENTITY,
    }
}

fn apply_intensity(c: Rgba, k: Option<f64>) -> Rgba {
    match k {
        Some(k) => Rgba::new(c.r * k, c.g * k, c.b * k, c.a),
        None => c,
    }
}

fn check_object(obj: &VirtualObject, tracker_exists: &dyn Fn(&str) -> bool) -> Result<(), SceneError> {
    let bad = |msg: String| Err(SceneError::Invalid { object: obj.id.clone(), msg });
    if !is_identifier(&obj.id) {
        return Err(SceneError::BadId(obj.id.clone()));
    }
    if !obj.position.is_finite() {
        return bad("position must be finite".into());
    }
    let color_ok = |c: &Rgba| c.is_valid();
    match &obj.kind {
        ObjectKind::Text { precision, size, color, orientation, .. } => {
            if *precision > MAX_PRECISION {
                return bad(format!("precision {precision} exceeds {MAX_PRECISION}"));
            }
            if !(*size > 0.0 && size.is_finite()) {
                return bad("text size must be positive".into());
            }
            if !color_ok(color) || !orientation.is_finite() {
                return bad("color components must lie in [0, 1]".into());
            }
        }
        ObjectKind::Highlight { scale, color, orientation, .. } => {
            if !(scale.x > 0.0 && scale.y > 0.0 && scale.z > 0.0 && scale.is_finite()) {
                return bad("scale components must be positive".into());
            }
            if !color_ok(color) || !orientation.is_finite() {
                return bad("color components must lie in [0, 1]".into());
            }
        }
        ObjectKind::Visual { size, opacity, orientation, .. } => {
            if !(size[0] > 0.0 && size[1] > 0.0 && size[0].is_finite() && size[1].is_finite()) {
                return bad("size must be positive".into());
            }
            if !(0.0..=1.0).contains(opacity) {
                return bad(format!("opacity {opacity} outside [0, 1]"));
            }
            if !orientation.is_finite() {
                return bad("orientation must be finite".into());
            }
        }
        ObjectKind::Link { a, b, thickness, color } => {
            if a == b {
                return bad("link endpoints must be distinct".into());
            }
            for e in [a, b] {
                match e {
                    Endpoint::Tracker(t) if !tracker_exists(t) => return Err(SceneError::UnknownTracker(t.clone())),
                    Endpoint::Fixed(p) if !p.is_finite() => return bad("fixed endpoint must be finite".into()),
                    _ => {}
                }
            }
            if !(*thickness > 0.0 && thickness.is_finite()) {
                return bad("thickness must be positive".into());
            }
            if !color_ok(color) {
                return bad("color components must lie in [0, 1]".into());
            }
        }
    }
    Ok(())
}

fn check_property_binding(
    scene: &Scene,
    pb: &PropertyBinding,
    declared: &dyn Fn(&str) -> bool,
) -> Result<(), SceneError> {
    let obj = scene.object(&pb.object).ok_or_else(|| SceneError::UnknownObject(pb.object.clone()))?;
    let applies = match (&obj.kind, pb.property) {
        (ObjectKind::Link { .. }, Property::Opacity | Property::ColorIntensity) => true,
        (ObjectKind::Link { .. }, _) => false,
        (ObjectKind::Visual { .. }, Property::ColorIntensity) => false,
        _ => true,
    };
    if !applies {
        return Err(SceneError::PropertyKind {
            object: pb.object.clone(),
            property: pb.property,
            kind: obj.kind.name(),
        });
    }
    if !(pb.a.is_finite() && pb.b.is_finite()) {
        return Err(SceneError::Invalid { object: pb.object.clone(), msg: "map coefficients must be finite".into() });
    }
    if let Some(name) = pb.source.expr.variables().into_iter().find(|v| !declared(v)) {
        return Err(SceneError::Variable {
            object: pb.object.clone(),
            source: UnknownVariable { name: name.to_string(), offset: 0 },
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(pairs: &[(&str, Option<f64>)]) -> VariableRegistry {
        VariableRegistry { frame: 0, values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    fn anchors(pairs: &[(&str, Option<Vec3>, bool)]) -> BTreeMap<String, Anchor> {
        pairs.iter().map(|(n, w, v)| (n.to_string(), Anchor { world: *w, valid: *v })).collect()
    }

    fn highlight(id: &str) -> VirtualObject {
        VirtualObject {
            id: id.into(),
            kind: ObjectKind::Highlight {
                shape: HighlightShape::Sphere,
                scale: Vec3::splat(0.1),
                color: highlight_color(),
                orientation: Quat::IDENTITY,
            },
            position: Vec3::ZERO,
        }
    }

    fn label(id: &str, src: &str) -> VirtualObject {
        serde_json::from_value(serde_json::json!({"id": id, "kind": "text", "template": src})).unwrap()
    }

    fn yes_all(_: &str) -> bool {
        true
    }

    #[test]
    fn highlight_follows_tracker_and_label_floats_above() {
        let mut s = Scene::default();
        s.add_object(highlight("h"), &yes_all).unwrap();
        s.add_object(label("l", "hi"), &yes_all).unwrap();
        s.attach(Binding { object: "h".into(), tracker: "obj_1".into(), offset: None }, &yes_all).unwrap();
        s.attach(Binding { object: "l".into(), tracker: "obj_1".into(), offset: None }, &yes_all).unwrap();
        let w = Vec3::new(0.2, 0.1, 1.5);
        let out = s.evaluate(&reg(&[]), &anchors(&[("obj_1", Some(w), true)]), Vec3::ZERO);
        assert!(matches!(out[0].body, ObjectBody::Highlight { position, .. } if position == w));
        assert!(matches!(out[1].body, ObjectBody::Text { position, .. } if position == w + DEFAULT_TEXT_OFFSET));
        assert!(out.iter().all(|o| !o.stale));
    }

    #[test]
    fn attach_rejects_dangling_references() {
        let mut s = Scene::default();
        s.add_object(highlight("h"), &yes_all).unwrap();
        let none = |_: &str| false;
        assert_eq!(
            s.attach(Binding { object: "h".into(), tracker: "obj_9".into(), offset: None }, &none),
            Err(SceneError::UnknownTracker("obj_9".into()))
        );
        assert_eq!(
            s.attach(Binding { object: "zz".into(), tracker: "obj_1".into(), offset: None }, &yes_all),
            Err(SceneError::UnknownObject("zz".into()))
        );
    }

    #[test]
    fn lost_tracker_holds_last_placement_and_flags_stale() {
        let mut s = Scene::default();
        s.add_object(highlight("h"), &yes_all).unwrap();
        s.attach(Binding { object: "h".into(), tracker: "t".into(), offset: Some(Vec3::X) }, &yes_all).unwrap();
        let last = Vec3::new(0.0, 0.0, 2.0);
        let out = s.evaluate(&reg(&[]), &anchors(&[("t", Some(last), false)]), Vec3::ZERO);
        assert!(out[0].stale);
        assert!(matches!(out[0].body, ObjectBody::Highlight { position, .. } if position == last + Vec3::X));
        // Never resolved: nothing to show yet.
        assert!(s.evaluate(&reg(&[]), &anchors(&[("t", None, false)]), Vec3::ZERO).is_empty());
    }

    #[test]
    fn property_maps_and_clamps() {
        let mut s = Scene::default();
        s.add_object(highlight("h"), &yes_all).unwrap();
        let src = |e: &str| SourceExpr::parse(e).unwrap();
        let pb = |property, e: &str, a| PropertyBinding {
            object: "h".into(),
            property,
            source: src(e),
            a,
            b: 0.0,
            axis: None,
        };
        s.add_property_binding(pb(Property::Scale, "distance_1", 1.0), &yes_all).unwrap();
        s.add_property_binding(pb(Property::Opacity, "distance_1", 3.0), &yes_all).unwrap();
        let out = s.evaluate(&reg(&[("distance_1", Some(2.0))]), &BTreeMap::new(), Vec3::ZERO);
        let ObjectBody::Highlight { scale, color, .. } = out[0].body else { panic!() };
        assert_eq!(scale, Vec3::splat(2.0));
        assert_eq!(color.a, 1.0);

        let out = s.evaluate(&reg(&[("distance_1", Some(-5.0))]), &BTreeMap::new(), Vec3::ZERO);
        let ObjectBody::Highlight { scale, color, .. } = out[0].body else { panic!() };
        assert_eq!(scale, Vec3::splat(MIN_SCALE));
        assert_eq!(color.a, 0.0);

        // Unavailable source keeps the authored values.
        let out = s.evaluate(&reg(&[("distance_1", None)]), &BTreeMap::new(), Vec3::ZERO);
        let ObjectBody::Highlight { scale, color, .. } = out[0].body else { panic!() };
        assert_eq!(scale, Vec3::splat(0.1));
        assert_eq!(color, highlight_color());
    }

    #[test]
    fn property_kind_mismatch_rejected() {
        let mut s = Scene::default();
        let link = VirtualObject {
            id: "k".into(),
            kind: ObjectKind::Link {
                a: Endpoint::Tracker("obj_1".into()),
                b: Endpoint::Fixed(Vec3::Z),
                thickness: 0.01,
                color: Rgba::WHITE,
            },
            position: Vec3::ZERO,
        };
        s.add_object(link, &yes_all).unwrap();
        let pb = PropertyBinding {
            object: "k".into(),
            property: Property::Scale,
            source: SourceExpr::parse("1").unwrap(),
            a: 1.0,
            b: 0.0,
            axis: None,
        };
        assert!(matches!(s.add_property_binding(pb, &yes_all), Err(SceneError::PropertyKind { .. })));
    }

    #[test]
    fn link_length_matches_distance() {
        let mut s = Scene::default();
        let link = VirtualObject {
            id: "k".into(),
            kind: ObjectKind::Link {
                a: Endpoint::Tracker("obj_1".into()),
                b: Endpoint::Tracker("anchor_1".into()),
                thickness: 0.01,
                color: Rgba::WHITE,
            },
            position: Vec3::ZERO,
        };
        s.add_object(link, &yes_all).unwrap();
        let (p, q) = (Vec3::new(0.3, -0.2, 1.1), Vec3::new(-0.4, 0.25, 2.0));
        let out = s.evaluate(&reg(&[]), &anchors(&[("obj_1", Some(p), true), ("anchor_1", Some(q), true)]), Vec3::ZERO);
        let ObjectBody::Link { a, b, length, .. } = out[0].body else { panic!() };
        assert_eq!((a, b), (p, q));
        assert_eq!(length, distance(p, q));
    }

    #[test]
    fn billboard_faces_camera() {
        let q = billboard_orient(Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO).unwrap();
        let z = q.rotate(Vec3::Z);
        assert!((z.dot(-Vec3::Z) - 1.0).abs() < 1e-12);
        assert!(q.rotate(Vec3::Y).dot(Vec3::UP) > 0.999_999);

        // Camera at 90 degrees azimuth: yaw about the vertical axis.
        let q = billboard_orient(Vec3::ZERO, Vec3::new(3.0, 0.0, 0.0)).unwrap();
        assert!((q.rotate(Vec3::Z).dot(Vec3::X) - 1.0).abs() < 1e-6);
        // Straight overhead still yields a valid basis.
        let q = billboard_orient(Vec3::ZERO, Vec3::new(0.0, -2.0, 0.0)).unwrap();
        assert!((q.rotate(Vec3::Z).dot(Vec3::UP) - 1.0).abs() < 1e-9);
        assert!(billboard_orient(Vec3::X, Vec3::X).is_none());
    }

    #[test]
    fn disabled_billboard_keeps_authored_orientation() {
        let mut s = Scene::default();
        let authored = Quat::from_axis_angle(Vec3::Y, 0.3);
        let obj: VirtualObject = serde_json::from_value(serde_json::json!({
            "id": "l", "kind": "text", "template": "x", "billboard": false,
            "orientation": [authored.x, authored.y, authored.z, authored.w], "position": [0.0, 0.0, 2.0]
        }))
        .unwrap();
        s.add_object(obj, &yes_all).unwrap();
        let out = s.evaluate(&reg(&[]), &BTreeMap::new(), Vec3::new(1.0, 0.0, 0.0));
        let ObjectBody::Text { orientation, .. } = out[0].body else { panic!() };
        assert_eq!(orientation, authored.normalized());
    }

    #[test]
    fn validate_reports_unknown_template_variable() {
        let mut s = Scene::default();
        s.add_object(label("l", "d=${distance_7}"), &yes_all).unwrap();
        let err = s.validate(&yes_all, &|n| n != "distance_7").unwrap_err();
        assert!(err.to_string().contains("distance_7"), "{err}");
    }

    #[test]
    fn object_json_round_trip() {
        let o = label("l", "PositionX: ${obj_1.x}");
        let j = serde_json::to_string(&o).unwrap();
        let back: VirtualObject = serde_json::from_str(&j).unwrap();
        assert_eq!(back, o);
    }

    #[test]
    fn orbit_camera_positions() {
        let c = CameraPath::Orbit {
            target: Vec3::new(0.0, 0.0, 2.0),
            radius: 1.0,
            period_frames: 4,
            elevation_deg: 0.0,
            phase_deg: 0.0,
        };
        assert_eq!(c.position(0), Vec3::new(0.0, 0.0, 1.0));
        let p = c.position(1);
        assert!((p - Vec3::new(1.0, 0.0, 2.0)).norm() < 1e-12);
        assert_eq!(c.position(4), c.position(0));
    }
}
