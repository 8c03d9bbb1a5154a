//! The evaluated state of one frame, as streamed and exported.

use std::collections::BTreeMap;

use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::effects::EffectGeometry;
use crate::frame::{CloudPoint, FPS};
use crate::geometry::{Rgb8, Vec3};
use crate::scene::{ObjectBody, ObjectState};

/// Self-contained augmentation state for one frame. It holds resolved
/// geometry and text only, never references to trackers.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    pub frame: u32,
    /// Virtual camera position used for billboarding.
    pub camera: Vec3,
    pub variables: BTreeMap<String, Option<f64>>,
    pub objects: Vec<ObjectState>,
    pub effects: Vec<EffectGeometry>,
}

impl SceneSnapshot {
    pub fn time(&self) -> f64 {
        f64::from(self.frame) / f64::from(FPS)
    }

    /// Canonical JSON encoding. The same bytes are written to export files
    /// and sent over the wire.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn object(&self, id: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Effect geometry and highlight/link anchors as colored points, appended
    /// to exported clouds.
    pub fn augmentation_points(&self) -> Vec<CloudPoint> {
        let mut out: Vec<CloudPoint> = self.effects.iter().flat_map(EffectGeometry::points).collect();
        for o in &self.objects {
            let (p, c) = match &o.body {
                ObjectBody::Highlight { position, color, .. } => (*position, color),
                ObjectBody::Link { a, b, color, .. } => {
                    let rgb = to_rgb8(color);
                    out.push(CloudPoint { position: f32x3(*a), color: rgb });
                    out.push(CloudPoint { position: f32x3(*b), color: rgb });
                    continue;
                }
                _ => continue,
            };
            out.push(CloudPoint { position: f32x3(p), color: to_rgb8(c) });
        }
        out
    }
}

fn f32x3(v: Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

fn to_rgb8(c: &crate::geometry::Rgba) -> Rgb8 {
    let q = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb8::new(q(c.r), q(c.g), q(c.b))
}

impl Serialize for SceneSnapshot {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Snapshot", 7)?;
        st.serialize_field("type", "Snapshot")?;
        st.serialize_field("frame", &self.frame)?;
        st.serialize_field("time", &self.time())?;
        st.serialize_field("camera", &self.camera)?;
        st.serialize_field("variables", &self.variables)?;
        st.serialize_field("objects", &self.objects)?;
        st.serialize_field("effects", &self.effects)?;
        st.end()
    }
}
