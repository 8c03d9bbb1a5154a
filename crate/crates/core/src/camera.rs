//! Pinhole camera model shared by unprojection, raycast selection and
//! billboard math.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Default grid of the recorded sequences.
pub const DEFAULT_WIDTH: u16 = 640;
pub const DEFAULT_HEIGHT: u16 = 576;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("invalid depth: depth must be > 0 mm")]
    InvalidDepth,
    #[error("point is behind the camera (z = {0} m)")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u16,
    pub height: u16,
}

impl Default for CameraIntrinsics {
    /// 640×576 with fx = fy = 500 and the principal point at the grid center.
    fn default() -> Self {
        Self { fx: 500.0, fy: 500.0, cx: 320.0, cy: 288.0, width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT }
    }
}

/// Continuous pixel coordinates (`u` = column, `v` = row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    pub depth_mm: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: String| Err(CameraError::InvalidIntrinsics(m));
        if !(self.fx > 0.0 && self.fx.is_finite()) || !(self.fy > 0.0 && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty grid {}x{}", self.width, self.height));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx) || !(0.0..f64::from(self.height)).contains(&self.cy) {
            return bad(format!(
                "principal point ({}, {}) outside {}x{} grid",
                self.cx, self.cy, self.width, self.height
            ));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        usize::from(self.width) * usize::from(self.height)
    }

    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && u < i64::from(self.width) && v < i64::from(self.height)
    }

    /// Pinhole unprojection of a single pixel at `depth_mm`.
    pub fn pixel_to_world(&self, px: Pixel, depth_mm: f64) -> Result<Vec3, CameraError> {
        if !(depth_mm > 0.0) {
            return Err(CameraError::InvalidDepth);
        }
        Ok(self.unproject_unchecked(px.u, px.v, depth_mm / 1000.0))
    }

    #[inline]
    pub(crate) fn unproject_unchecked(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Inverse of [`pixel_to_world`](Self::pixel_to_world). The returned depth
    /// is the exact `1000·z`; use [`Projection::depth_mm_rounded`] for the
    /// integer storage value.
    pub fn world_to_pixel(&self, p: Vec3) -> Result<Projection, CameraError> {
        if !(p.z > 0.0) {
            return Err(CameraError::BehindCamera(p.z));
        }
        Ok(Projection {
            pixel: Pixel::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy),
            depth_mm: 1000.0 * p.z,
        })
    }
}

impl Projection {
    pub fn depth_mm_rounded(&self) -> u32 {
        self.depth_mm.round() as u32
    }
}
