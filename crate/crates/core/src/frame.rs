//! RGB-D frames and point-cloud reconstruction.

use thiserror::Error;

use crate::camera::CameraIntrinsics;
use crate::geometry::{Rgb8, Vec3};

/// Fixed capture rate of every sequence.
pub const FPS: u32 = 30;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("frame is {got_w}x{got_h} but intrinsics expect {want_w}x{want_h}")]
pub struct DimensionMismatch {
    pub got_w: u16,
    pub got_h: u16,
    pub want_w: u16,
    pub want_h: u16,
}

/// Depth in millimeters, row-major. 0 marks a hole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    pub width: u16,
    pub height: u16,
    pub data: Vec<u16>,
}

impl DepthFrame {
    pub fn new(width: u16, height: u16) -> Self {
        Self { width, height, data: vec![0; usize::from(width) * usize::from(height)] }
    }

    pub fn filled(width: u16, height: u16, depth_mm: u16) -> Self {
        Self { width, height, data: vec![depth_mm; usize::from(width) * usize::from(height)] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * usize::from(self.width) + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: u16) {
        let w = usize::from(self.width);
        self.data[v * w + u] = d;
    }
}

/// RGB8, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorFrame {
    pub width: u16,
    pub height: u16,
    pub data: Vec<Rgb8>,
}

impl ColorFrame {
    pub fn new(width: u16, height: u16) -> Self {
        Self { width, height, data: vec![Rgb8::default(); usize::from(width) * usize::from(height)] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Rgb8 {
        self.data[v * usize::from(self.width) + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: Rgb8) {
        let w = usize::from(self.width);
        self.data[v * w + u] = c;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbdFrame {
    pub index: u32,
    pub depth: DepthFrame,
    pub color: ColorFrame,
}

impl RgbdFrame {
    pub fn timestamp(&self) -> f64 {
        f64::from(self.index) / f64::from(FPS)
    }

    pub fn width(&self) -> u16 {
        self.depth.width
    }

    pub fn height(&self) -> u16 {
        self.depth.height
    }

    pub fn check_dims(&self, k: &CameraIntrinsics) -> Result<(), DimensionMismatch> {
        let ok = self.depth.width == k.width
            && self.depth.height == k.height
            && self.color.width == k.width
            && self.color.height == k.height
            && self.depth.data.len() == k.pixel_count()
            && self.color.data.len() == k.pixel_count();
        if ok {
            Ok(())
        } else {
            Err(DimensionMismatch {
                got_w: self.depth.width,
                got_h: self.depth.height,
                want_w: k.width,
                want_h: k.height,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    /// Meters, single precision as streamed and exported.
    pub position: [f32; 3],
    pub color: Rgb8,
}

impl CloudPoint {
    pub fn position_vec3(&self) -> Vec3 {
        Vec3::new(f64::from(self.position[0]), f64::from(self.position[1]), f64::from(self.position[2]))
    }

    pub(crate) fn from_world(p: Vec3, color: Rgb8) -> Self {
        Self { position: [p.x as f32, p.y as f32, p.z as f32], color }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Reconstruct the colored point cloud of `frame`. Holes are omitted and
/// points keep row-major pixel order.
pub fn unproject(frame: &RgbdFrame, k: &CameraIntrinsics) -> Result<PointCloud, DimensionMismatch> {
    frame.check_dims(k)?;
    let w = usize::from(k.width);
    let mut points = Vec::with_capacity(frame.depth.data.len());
    for (row, (depths, colors)) in frame.depth.data.chunks_exact(w).zip(frame.color.data.chunks_exact(w)).enumerate() {
        let v = row as f64;
        for (col, (&d, &c)) in depths.iter().zip(colors).enumerate() {
            if d == 0 {
                continue;
            }
            let p = k.unproject_unchecked(col as f64, v, f64::from(d) / 1000.0);
            points.push(CloudPoint::from_world(p, c));
        }
    }
    Ok(PointCloud { points })
}

/// Unproject only the listed row-major pixel indices, skipping holes.
pub fn unproject_pixels(frame: &RgbdFrame, k: &CameraIntrinsics, indices: &[u32]) -> Vec<CloudPoint> {
    let w = usize::from(k.width);
    indices
        .iter()
        .filter_map(|&i| {
            let i = i as usize;
            let d = frame.depth.data[i];
            (d != 0).then(|| {
                let p = k.unproject_unchecked((i % w) as f64, (i / w) as f64, f64::from(d) / 1000.0);
                CloudPoint::from_world(p, frame.color.data[i])
            })
        })
        .collect()
}
