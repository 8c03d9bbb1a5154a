//! Scripted synthetic RGB-D clips with exact ground truth.
//!
//! A scene is a flat background plane plus colored primitives (disks or
//! squares facing the camera) that move along keyframed or circular paths
//! and can be hidden during occlusion windows. Rendering is deterministic in
//! `(scene, seed)` and each frame can be generated independently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, Pixel};
use crate::container::{ContainerError, ContainerWriter, MemorySequence};
use crate::frame::{ColorFrame, DepthFrame, RgbdFrame};
use crate::geometry::{Rgb8, Vec3};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthetic spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("synthetic spec: {0}")]
    Invalid(String),
    #[error("primitive '{name}' leaves the camera frustum at frame {frame}")]
    OutsideFrustum { name: String, frame: u32 },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Square,
}

/// Path keyframe, given either in pixels + depth or directly in world space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Keyframe {
    Pixel { frame: u32, pixel: [f64; 2], depth_mm: f64 },
    World { frame: u32, world: Vec3 },
}

impl Keyframe {
    fn frame(&self) -> u32 {
        match self {
            Keyframe::Pixel { frame, .. } | Keyframe::World { frame, .. } => *frame,
        }
    }
}

/// Uniform circular motion in the plane spanned by `axis_a` and `axis_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleMotion {
    pub center: Vec3,
    pub radius_m: f64,
    pub period_frames: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_axis_a")]
    pub axis_a: Vec3,
    #[serde(default = "default_axis_b")]
    pub axis_b: Vec3,
}

fn default_axis_a() -> Vec3 {
    Vec3::X
}

fn default_axis_b() -> Vec3 {
    Vec3::Y
}

/// Inclusive frame window during which a primitive is not drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub name: String,
    pub shape: Shape,
    pub color: Rgb8,
    pub radius_px: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<Keyframe>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleMotion>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub depth_mm: u16,
    #[serde(default)]
    pub color: Rgb8,
    /// Per-channel uniform color jitter amplitude.
    #[serde(default)]
    pub texture: u8,
    /// Uniform depth jitter amplitude in mm.
    #[serde(default)]
    pub depth_noise_mm: u16,
}

/// Keypoint columns of a generated pose sidecar that follow primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseScript {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    pub keypoints: Vec<PoseBinding>,
}

fn default_k() -> usize {
    33
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseBinding {
    pub index: usize,
    pub primitive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub frames: u32,
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
    pub background: Background,
    /// Fraction of pixels turned into depth holes, drawn from the seeded RNG.
    #[serde(default)]
    pub hole_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    pub primitives: Vec<Primitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseScript>,
}

/// Ground truth for one primitive on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveTruth {
    pub frame: u32,
    pub visible: bool,
    /// Pixels the primitive owns after compositing.
    pub pixel_count: u32,
    /// Mean of owned pixel coordinates.
    pub centroid_px: Option<[f64; 2]>,
    pub depth_mm: u16,
    /// Scripted center of the primitive.
    pub center_world: Vec3,
    /// `pixel_to_world(centroid_px, depth_mm)`.
    pub centroid_world: Option<Vec3>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tracks: BTreeMap<String, Vec<PrimitiveTruth>>,
}

impl GroundTruth {
    /// Fraction of frames in which `primitive` is visible.
    pub fn visible_fraction(&self, primitive: &str) -> Option<f64> {
        let t = self.tracks.get(primitive)?;
        Some(t.iter().filter(|p| p.visible).count() as f64 / t.len() as f64)
    }
}

/// A validated scene ready to render.
#[derive(Debug, Clone)]
pub struct SynthScene {
    spec: SynthSpec,
    k: CameraIntrinsics,
}

impl SynthScene {
    pub fn from_json(src: &str) -> Result<Self, SynthError> {
        Self::new(serde_json::from_str(src)?)
    }

    pub fn new(spec: SynthSpec) -> Result<Self, SynthError> {
        let k = spec.intrinsics.unwrap_or_default();
        k.validate().map_err(|e| SynthError::Invalid(e.to_string()))?;
        if spec.frames == 0 {
            return Err(SynthError::Invalid("frames must be > 0".into()));
        }
        if spec.background.depth_mm == 0 {
            return Err(SynthError::Invalid("background depth must be > 0 mm".into()));
        }
        if !(0.0..1.0).contains(&spec.hole_fraction) {
            return Err(SynthError::Invalid("hole_fraction must lie in [0, 1)".into()));
        }
        let scene = Self { spec, k };
        for (i, p) in scene.spec.primitives.iter().enumerate() {
            if scene.spec.primitives[..i].iter().any(|q| q.name == p.name) {
                return Err(SynthError::Invalid(format!("duplicate primitive name '{}'", p.name)));
            }
            if !(p.radius_px > 0.0 && p.radius_px.is_finite()) {
                return Err(SynthError::Invalid(format!("primitive '{}' needs radius_px > 0", p.name)));
            }
            match (&p.path, &p.circle) {
                (Some(path), None) => {
                    if path.is_empty() {
                        return Err(SynthError::Invalid(format!("primitive '{}' has an empty path", p.name)));
                    }
                    if path.windows(2).any(|w| w[0].frame() >= w[1].frame()) {
                        return Err(SynthError::Invalid(format!(
                            "primitive '{}' keyframes must have increasing frames",
                            p.name
                        )));
                    }
                }
                (None, Some(c)) => {
                    if !(c.period_frames > 0.0) {
                        return Err(SynthError::Invalid(format!("primitive '{}' needs period_frames > 0", p.name)));
                    }
                }
                _ => {
                    return Err(SynthError::Invalid(format!(
                        "primitive '{}' needs exactly one of 'path' or 'circle'",
                        p.name
                    )))
                }
            }
            for o in &p.occlusions {
                if o.start > o.end {
                    return Err(SynthError::Invalid(format!("primitive '{}' has an inverted occlusion", p.name)));
                }
            }
            for frame in 0..scene.spec.frames {
                let c = scene.center_world(p, frame);
                let inside = scene.k.world_to_pixel(c).ok().filter(|proj| {
                    let Pixel { u, v } = proj.pixel;
                    let r = p.radius_px;
                    u - r >= 0.0
                        && v - r >= 0.0
                        && u + r <= f64::from(scene.k.width) - 1.0
                        && v + r <= f64::from(scene.k.height) - 1.0
                        && proj.depth_mm.round() >= 1.0
                        && proj.depth_mm.round() < 65536.0
                });
                if inside.is_none() {
                    return Err(SynthError::OutsideFrustum { name: p.name.clone(), frame });
                }
            }
        }
        if let Some(pose) = &scene.spec.pose {
            for b in &pose.keypoints {
                if b.index >= pose.k {
                    return Err(SynthError::Invalid(format!("pose keypoint {} >= k = {}", b.index, pose.k)));
                }
                if !scene.spec.primitives.iter().any(|p| p.name == b.primitive) {
                    return Err(SynthError::Invalid(format!("pose binds unknown primitive '{}'", b.primitive)));
                }
            }
            if !(0.0..=1.0).contains(&pose.confidence) {
                return Err(SynthError::Invalid("pose confidence must lie in [0, 1]".into()));
            }
        }
        Ok(scene)
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.k
    }

    pub fn frame_count(&self) -> u32 {
        self.spec.frames
    }

    fn keyframe_world(&self, kf: &Keyframe) -> Vec3 {
        match kf {
            Keyframe::World { world, .. } => *world,
            Keyframe::Pixel { pixel, depth_mm, .. } => {
                self.k.unproject_unchecked(pixel[0], pixel[1], depth_mm / 1000.0)
            }
        }
    }

    /// Scripted world-space center of `p` at `frame`.
    pub fn center_world(&self, p: &Primitive, frame: u32) -> Vec3 {
        if let Some(c) = &p.circle {
            let angle = std::f64::consts::TAU * (f64::from(frame) / c.period_frames) + c.phase;
            return c.center + c.axis_a * (c.radius_m * angle.cos()) + c.axis_b * (c.radius_m * angle.sin());
        }
        let path = p.path.as_deref().unwrap_or_default();
        let first = &path[0];
        if frame <= first.frame() {
            return self.keyframe_world(first);
        }
        for w in path.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if frame <= b.frame() {
                let t = f64::from(frame - a.frame()) / f64::from(b.frame() - a.frame());
                let (pa, pb) = (self.keyframe_world(a), self.keyframe_world(b));
                return pa + (pb - pa) * t;
            }
        }
        self.keyframe_world(path.last().unwrap())
    }

    fn occluded(p: &Primitive, frame: u32) -> bool {
        p.occlusions.iter().any(|o| (o.start..=o.end).contains(&frame))
    }

    /// Render one frame and its ground truth (one entry per primitive, in
    /// spec order).
    pub fn render_frame(&self, frame: u32) -> (RgbdFrame, Vec<PrimitiveTruth>) {
        let (w, h) = (usize::from(self.k.width), usize::from(self.k.height));
        let bg = &self.spec.background;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(u64::from(frame));

        let mut depth = DepthFrame::new(self.k.width, self.k.height);
        let mut color = ColorFrame::new(self.k.width, self.k.height);
        for (d, c) in depth.data.iter_mut().zip(color.data.iter_mut()) {
            let jitter = |rng: &mut ChaCha8Rng, base: u8| -> u8 {
                if bg.texture == 0 {
                    base
                } else {
                    let t = i16::from(bg.texture);
                    (i16::from(base) + rng.gen_range(-t..=t)).clamp(0, 255) as u8
                }
            };
            *c = Rgb8::new(jitter(&mut rng, bg.color.r), jitter(&mut rng, bg.color.g), jitter(&mut rng, bg.color.b));
            *d = if bg.depth_noise_mm == 0 {
                bg.depth_mm
            } else {
                let n = i32::from(bg.depth_noise_mm);
                (i32::from(bg.depth_mm) + rng.gen_range(-n..=n)).clamp(1, 65535) as u16
            };
        }

        let mut owner: Vec<u16> = vec![u16::MAX; w * h];
        let mut centers = Vec::with_capacity(self.spec.primitives.len());
        for (id, p) in self.spec.primitives.iter().enumerate() {
            let center = self.center_world(p, frame);
            let proj = self.k.world_to_pixel(center).expect("validated inside frustum");
            let dmm = proj.depth_mm.round() as u16;
            centers.push((center, dmm));
            if Self::occluded(p, frame) {
                continue;
            }
            let (cu, cv, r) = (proj.pixel.u, proj.pixel.v, p.radius_px);
            let (u0, u1) = (((cu - r).floor().max(0.0)) as usize, ((cu + r).ceil() as usize).min(w - 1));
            let (v0, v1) = (((cv - r).floor().max(0.0)) as usize, ((cv + r).ceil() as usize).min(h - 1));
            for v in v0..=v1 {
                for u in u0..=u1 {
                    let (du, dv) = (u as f64 - cu, v as f64 - cv);
                    let inside = match p.shape {
                        Shape::Disk => du * du + dv * dv <= r * r,
                        Shape::Square => du.abs() <= r && dv.abs() <= r,
                    };
                    if inside {
                        let i = v * w + u;
                        owner[i] = id as u16;
                        color.data[i] = p.color;
                        depth.data[i] = dmm;
                    }
                }
            }
        }

        if self.spec.hole_fraction > 0.0 {
            for d in depth.data.iter_mut() {
                if rng.gen::<f64>() < self.spec.hole_fraction {
                    *d = 0;
                }
            }
        }

        let n = self.spec.primitives.len();
        let mut sums = vec![(0u64, 0u64, 0u32); n];
        for (i, &o) in owner.iter().enumerate() {
            if o != u16::MAX {
                let s = &mut sums[usize::from(o)];
                s.0 += (i % w) as u64;
                s.1 += (i / w) as u64;
                s.2 += 1;
            }
        }
        let truth = sums
            .iter()
            .zip(&centers)
            .map(|(&(su, sv, count), &(center, dmm))| {
                let centroid = (count > 0).then(|| [su as f64 / f64::from(count), sv as f64 / f64::from(count)]);
                PrimitiveTruth {
                    frame,
                    visible: count > 0,
                    pixel_count: count,
                    centroid_px: centroid,
                    depth_mm: dmm,
                    center_world: center,
                    centroid_world: centroid
                        .and_then(|c| self.k.pixel_to_world(Pixel::new(c[0], c[1]), f64::from(dmm)).ok()),
                }
            })
            .collect();
        (RgbdFrame { index: frame, depth, color }, truth)
    }

    fn push_truth(&self, gt: &mut GroundTruth, truth: Vec<PrimitiveTruth>) {
        for (p, t) in self.spec.primitives.iter().zip(truth) {
            gt.tracks.entry(p.name.clone()).or_default().push(t);
        }
    }

    /// Render the whole clip into memory.
    pub fn generate(&self) -> (MemorySequence, GroundTruth) {
        let mut gt = GroundTruth::default();
        let mut frames = Vec::with_capacity(self.spec.frames as usize);
        for f in 0..self.spec.frames {
            let (frame, truth) = self.render_frame(f);
            frames.push(frame);
            self.push_truth(&mut gt, truth);
        }
        let seq = MemorySequence::new(self.k, frames).expect("rendered frames match intrinsics");
        (seq, gt)
    }

    /// Stream the clip to a container file without holding it in memory.
    pub fn write_container(&self, path: &Path) -> Result<GroundTruth, SynthError> {
        let file = std::fs::File::create(path)?;
        let mut w = ContainerWriter::new(std::io::BufWriter::new(file), self.k, self.spec.frames)?;
        let mut gt = GroundTruth::default();
        for f in 0..self.spec.frames {
            let (frame, truth) = self.render_frame(f);
            w.push(&frame)?;
            self.push_truth(&mut gt, truth);
        }
        w.finish()?;
        Ok(gt)
    }

    /// Pose sidecar text for the scripted keypoints, or `None` when the scene
    /// has no pose script. Bound keypoints sit on the primitive's projected
    /// center; unbound or occluded ones carry confidence 0.
    pub fn pose_sidecar(&self) -> Option<String> {
        let pose = self.spec.pose.as_ref()?;
        let mut out = format!("{{\"k\":{}}}\n", pose.k);
        for frame in 0..self.spec.frames {
            let mut kps = vec![[0.0, 0.0, 0.0]; pose.k];
            for b in &pose.keypoints {
                let p = self.spec.primitives.iter().find(|p| p.name == b.primitive).unwrap();
                let px = self.k.world_to_pixel(self.center_world(p, frame)).unwrap().pixel;
                let conf = if Self::occluded(p, frame) { 0.0 } else { pose.confidence };
                kps[b.index] = [px.u, px.v, conf];
            }
            let _ = write!(out, "{{\"frame\":{frame},\"kp\":{}}}\n", serde_json::to_string(&kps).unwrap());
        }
        Some(out)
    }

    pub fn write_truth(gt: &GroundTruth, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut out, gt)?;
        out.write_all(b"\n")
    }
}
