//! Color-blob tracking: tolerance mask, largest 8-connected component,
//! centroid and median depth.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Pixel};
use crate::frame::RgbdFrame;
use crate::geometry::{Rgb8, Vec3};

pub const DEFAULT_TOLERANCE: u8 = 10;
pub const DEFAULT_MIN_COMPONENT_PX: u32 = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorTrackerState {
    pub reference_rgb: Rgb8,
    pub tolerance: u8,
    pub min_component_px: u32,
    pub last_world: Option<Vec3>,
    pub lost: bool,
}

impl ColorTrackerState {
    pub fn new(reference_rgb: Rgb8) -> Self {
        Self {
            reference_rgb,
            tolerance: DEFAULT_TOLERANCE,
            min_component_px: DEFAULT_MIN_COMPONENT_PX,
            last_world: None,
            lost: false,
        }
    }

    /// Apply a resolution to the mutable part of the state.
    pub fn commit(&mut self, world: Option<Vec3>) {
        match world {
            Some(w) => {
                self.last_world = Some(w);
                self.lost = false;
            }
            None => self.lost = true,
        }
    }
}

/// Outcome of resolving a color tracker on one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColorObservation {
    /// World point, present only when the frame yields a valid resolution.
    pub world: Option<Vec3>,
    pub centroid: Option<Pixel>,
    pub depth_mm: Option<f64>,
    /// Row-major pixel indices of the selected component (empty when no
    /// component reached the size threshold).
    pub component: Vec<u32>,
}

/// A labeled 8-connected component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Row-major pixel indices in discovery order.
    pub pixels: Vec<u32>,
    pub min_row: u32,
    pub min_col: u32,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Largest 8-connected component of `mask` (row-major, `width` columns).
/// Ties go to the component whose bounding box top-left corner comes first
/// in row-major order.
pub fn largest_component(mask: &[bool], width: usize) -> Option<Component> {
    if mask.is_empty() || width == 0 {
        return None;
    }
    let height = mask.len() / width;
    let mut seen = vec![false; mask.len()];
    let mut stack: Vec<u32> = Vec::new();
    let mut current: Vec<u32> = Vec::new();
    let mut best: Option<Component> = None;

    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start as u32);
        current.clear();
        // Row-major discovery means the seed has the smallest row.
        let min_row = (start / width) as u32;
        let mut min_col = (start % width) as u32;
        while let Some(p) = stack.pop() {
            current.push(p);
            let (u, v) = (p as usize % width, p as usize / width);
            min_col = min_col.min(u as u32);
            let (u0, u1) = (u.saturating_sub(1), (u + 1).min(width - 1));
            let (v0, v1) = (v.saturating_sub(1), (v + 1).min(height - 1));
            for nv in v0..=v1 {
                let row = nv * width;
                for nu in u0..=u1 {
                    let n = row + nu;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n as u32);
                    }
                }
            }
        }
        let better = match &best {
            None => true,
            Some(b) => {
                current.len() > b.len() || (current.len() == b.len() && (min_row, min_col) < (b.min_row, b.min_col))
            }
        };
        if better {
            best = Some(Component { pixels: current.clone(), min_row, min_col });
        }
    }
    best
}

/// Median of the nonzero samples; the mean of the two middle values for an
/// even count.
pub fn median_nonzero(samples: impl IntoIterator<Item = u16>) -> Option<f64> {
    let mut v: Vec<u16> = samples.into_iter().filter(|&d| d != 0).collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len();
    let mid = n / 2;
    let (_, &mut hi, _) = v.select_nth_unstable(mid);
    if n % 2 == 1 {
        Some(f64::from(hi))
    } else {
        let lo = *v[..mid].iter().max().unwrap();
        Some((f64::from(lo) + f64::from(hi)) / 2.0)
    }
}

pub fn color_mask(frame: &RgbdFrame, reference: Rgb8, tolerance: u8) -> Vec<bool> {
    frame.color.data.iter().map(|c| c.within(reference, tolerance)).collect()
}

/// Resolve a color tracker on `frame`. Pure in `(frame, state)`.
pub fn track_color(frame: &RgbdFrame, k: &CameraIntrinsics, state: &ColorTrackerState) -> ColorObservation {
    let width = usize::from(frame.width());
    let mask = color_mask(frame, state.reference_rgb, state.tolerance);
    let Some(comp) = largest_component(&mask, width) else {
        return ColorObservation::default();
    };
    if (comp.len() as u64) < u64::from(state.min_component_px.max(1)) {
        return ColorObservation::default();
    }
    let (mut su, mut sv) = (0u64, 0u64);
    for &p in &comp.pixels {
        su += u64::from(p) % width as u64;
        sv += u64::from(p) / width as u64;
    }
    let n = comp.len() as f64;
    let centroid = Pixel::new(su as f64 / n, sv as f64 / n);
    let depth = median_nonzero(comp.pixels.iter().map(|&p| frame.depth.data[p as usize]));
    let world = depth.and_then(|d| k.pixel_to_world(centroid, d).ok());
    ColorObservation { world, centroid: Some(centroid), depth_mm: depth, component: comp.pixels }
}
