use crate::camera::{CameraIntrinsics, Pixel};
use crate::frame::RgbdFrame;
use crate::geometry::Vec3;

/// Largest ring searched for a depth sample when the clicked pixel is a hole.
pub const SNAP_RADIUS_PX: i64 = 10;
/// Placement depth when no sample is found near the click.
pub const MID_AIR_DEPTH_MM: f64 = 1000.0;

/// Nearest nonzero depth around `(u, v)`: the pixel itself, then square
/// rings of growing radius, each scanned top-left to bottom-right.
pub fn snap_depth(frame: &RgbdFrame, k: &CameraIntrinsics, u: i64, v: i64) -> Option<u16> {
    for r in 0..=SNAP_RADIUS_PX {
        for dv in -r..=r {
            for du in -r..=r {
                if du.abs() != r && dv.abs() != r {
                    continue;
                }
                let (pu, pv) = (u + du, v + dv);
                if k.contains(pu, pv) {
                    let d = frame.depth.get(pu as usize, pv as usize);
                    if d != 0 {
                        return Some(d);
                    }
                }
            }
        }
    }
    None
}

/// Raycast a click into the scene. Returns the world point and whether it was
/// placed in mid-air for lack of depth.
pub fn raycast(frame: &RgbdFrame, k: &CameraIntrinsics, click: Pixel) -> (Vec3, bool) {
    let (u, v) = (click.u.round() as i64, click.v.round() as i64);
    match snap_depth(frame, k, u, v) {
        Some(d) => (k.unproject_unchecked(click.u, click.v, f64::from(d) / 1000.0), false),
        None => (k.unproject_unchecked(click.u, click.v, MID_AIR_DEPTH_MM / 1000.0), true),
    }
}
