//! Body keypoint tracks supplied through a sidecar file, and their lift to
//! 3D through the depth channel.
//!
//! Sidecar format (newline-delimited JSON):
//!
//! ```text
//! {"k": 33}
//! {"frame": 0, "kp": [[u, v, confidence], ...]}
//! {"frame": 1, "kp": [...]}
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::camera::{CameraIntrinsics, Pixel};
use crate::frame::RgbdFrame;
use crate::geometry::Vec3;
use crate::tracking::color::median_nonzero;

pub const DEFAULT_KEYPOINTS: usize = 33;
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.5;
/// Side of the square depth window sampled around a keypoint.
pub const DEPTH_WINDOW: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("pose sidecar: {0}")]
    Io(String),
    #[error("pose sidecar line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("pose sidecar line {line}: keypoint {keypoint} confidence {value} outside [0, 1]")]
    Confidence { line: usize, keypoint: usize, value: f64 },
    #[error("pose sidecar line {line}: expected {expected} keypoints, found {found}")]
    KeypointCount { line: usize, expected: usize, found: usize },
    #[error("pose sidecar line {line}: expected frame {expected}, found {found}")]
    FrameOrder { line: usize, expected: u32, found: u32 },
    #[error("pose sidecar has {got} frames but the sequence has {expected}")]
    CountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame: u32,
    pub keypoints: Vec<Keypoint>,
}

/// Keypoints for every frame of a sequence, addressable by `(frame, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    k: usize,
    frames: Vec<PoseFrame>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    k: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    frame: u32,
    kp: Vec<[f64; 3]>,
}

impl PoseTrack {
    pub fn parse(text: &str) -> Result<Self, PoseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) =
            lines.next().ok_or(PoseError::Malformed { line: 1, msg: "missing {\"k\": K} header".into() })?;
        let header: Header = serde_json::from_str(htext)
            .map_err(|e| PoseError::Malformed { line: hline, msg: format!("bad header: {e}") })?;
        if header.k == 0 {
            return Err(PoseError::Malformed { line: hline, msg: "k must be > 0".into() });
        }
        let mut frames = Vec::new();
        for (line, text) in lines {
            let rec: Record =
                serde_json::from_str(text).map_err(|e| PoseError::Malformed { line, msg: e.to_string() })?;
            let expected = frames.len() as u32;
            if rec.frame != expected {
                return Err(PoseError::FrameOrder { line, expected, found: rec.frame });
            }
            if rec.kp.len() != header.k {
                return Err(PoseError::KeypointCount { line, expected: header.k, found: rec.kp.len() });
            }
            let mut keypoints = Vec::with_capacity(header.k);
            for (i, [u, v, c]) in rec.kp.into_iter().enumerate() {
                if !(0.0..=1.0).contains(&c) {
                    return Err(PoseError::Confidence { line, keypoint: i, value: c });
                }
                if !u.is_finite() || !v.is_finite() {
                    return Err(PoseError::Malformed { line, msg: format!("keypoint {i} has non-finite coordinates") });
                }
                keypoints.push(Keypoint { u, v, confidence: c });
            }
            frames.push(PoseFrame { frame: rec.frame, keypoints });
        }
        Ok(Self { k: header.k, frames })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, index: usize) -> Option<&PoseFrame> {
        self.frames.get(index)
    }

    pub fn keypoint(&self, frame: usize, index: usize) -> Option<Keypoint> {
        self.frames.get(frame)?.keypoints.get(index).copied()
    }
}

/// Load a sidecar and check it covers exactly `sequence_len` frames.
pub fn attach_pose_sidecar(sequence_len: usize, path: &Path) -> Result<PoseTrack, PoseError> {
    let text = std::fs::read_to_string(path).map_err(|e| PoseError::Io(format!("{}: {e}", path.display())))?;
    attach_pose_text(sequence_len, &text)
}

pub fn attach_pose_text(sequence_len: usize, text: &str) -> Result<PoseTrack, PoseError> {
    let track = PoseTrack::parse(text)?;
    if track.len() != sequence_len {
        return Err(PoseError::CountMismatch { expected: sequence_len, got: track.len() });
    }
    Ok(track)
}

/// Lift a keypoint to 3D: median of nonzero depths in a 5×5 window around the
/// rounded keypoint, unprojected at the keypoint's sub-pixel position.
pub fn resolve_body(frame: &RgbdFrame, k: &CameraIntrinsics, kp: Keypoint, confidence_floor: f64) -> Option<Vec3> {
    if kp.confidence < confidence_floor {
        return None;
    }
    let (cu, cv) = (kp.u.round(), kp.v.round());
    if !k.contains(cu as i64, cv as i64) {
        return None;
    }
    let half = (DEPTH_WINDOW / 2) as i64;
    let (cu, cv) = (cu as i64, cv as i64);
    let samples = (cv - half..=cv + half)
        .flat_map(|v| (cu - half..=cu + half).map(move |u| (u, v)))
        .filter(|&(u, v)| k.contains(u, v))
        .map(|(u, v)| frame.depth.get(u as usize, v as usize));
    let depth = median_nonzero(samples)?;
    k.pixel_to_world(Pixel::new(kp.u, kp.v), depth).ok()
}
